#include "degflow/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace degflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

int64_t parse_int(const std::string& origin, int line, const std::string& key,
                  const std::string& v) {
  try {
    size_t used = 0;
    const int64_t r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail(origin, line, "invalid integer for '" + key + "': " + v);
  }
}

uint64_t parse_u64(const std::string& origin, int line, const std::string& key,
                   const std::string& v) {
  try {
    size_t used = 0;
    const uint64_t r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail(origin, line, "invalid unsigned integer for '" + key + "': " + v);
  }
}

double parse_double(const std::string& origin, int line, const std::string& key,
                    const std::string& v) {
  try {
    size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail(origin, line, "invalid number for '" + key + "': " + v);
  }
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(origin, line_no, "expected 'key = value': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) fail(origin, line_no, "empty key");

    if (key == "hr_dir") cfg.hr_dir = val;
    else if (key == "lr_dir") cfg.lr_dir = val;
    else if (key == "val_hr_dir") cfg.val_hr_dir = val;
    else if (key == "val_lr_dir") cfg.val_lr_dir = val;
    else if (key == "out_dir") cfg.out_dir = val;
    else if (key == "seed") cfg.seed = parse_u64(origin, line_no, key, val);
    else if (key == "dtlr_iterations") cfg.dtlr.iterations = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "dtlr_scale") cfg.dtlr.scale = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "dtlr_filter") {
      try {
        cfg.dtlr.filter = filter_from_string(val);
      } catch (const ConfigError& e) {
        fail(origin, line_no, e.what());
      }
    }
    else if (key == "aenet_base_channels") cfg.aenet.base_channels = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "aenet_residual_blocks") cfg.aenet.residual_blocks = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "aenet_kernel_size") cfg.aenet.kernel_size = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "fgdm_steps") cfg.fgdm_steps = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "vnet_base_channels") cfg.vnet.base_channels = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "rfdm_steps") cfg.rfdm_steps = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "lambda") cfg.lambda = static_cast<float>(parse_double(origin, line_no, key, val));
    else if (key == "flow_steps") cfg.flow_steps = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "learning_rate") cfg.learning_rate = static_cast<float>(parse_double(origin, line_no, key, val));
    else if (key == "lr_patch") cfg.lr_patch = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "corpus_train_images") cfg.corpus_train_images = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "corpus_val_images") cfg.corpus_val_images = static_cast<int>(parse_int(origin, line_no, key, val));
    else if (key == "corpus_hr_size") cfg.corpus_hr_size = static_cast<int>(parse_int(origin, line_no, key, val));
    else fail(origin, line_no, "unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::string RunConfig::to_string() const {
  std::ostringstream os;
  os << "# degflow run configuration\n";
  os << "hr_dir = " << hr_dir << "\n";
  os << "lr_dir = " << lr_dir << "\n";
  os << "val_hr_dir = " << val_hr_dir << "\n";
  os << "val_lr_dir = " << val_lr_dir << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "seed = " << seed << "\n";
  os << "dtlr_iterations = " << dtlr.iterations << "\n";
  os << "dtlr_scale = " << dtlr.scale << "\n";
  os << "dtlr_filter = " << filter_to_string(dtlr.filter) << "\n";
  os << "aenet_base_channels = " << aenet.base_channels << "\n";
  os << "aenet_residual_blocks = " << aenet.residual_blocks << "\n";
  os << "aenet_kernel_size = " << aenet.kernel_size << "\n";
  os << "fgdm_steps = " << fgdm_steps << "\n";
  os << "vnet_base_channels = " << vnet.base_channels << "\n";
  os << "rfdm_steps = " << rfdm_steps << "\n";
  os << "lambda = " << lambda << "\n";
  os << "flow_steps = " << flow_steps << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "learning_rate = " << learning_rate << "\n";
  os << "lr_patch = " << lr_patch << "\n";
  os << "corpus_train_images = " << corpus_train_images << "\n";
  os << "corpus_val_images = " << corpus_val_images << "\n";
  os << "corpus_hr_size = " << corpus_hr_size << "\n";
  return os.str();
}

}  // namespace degflow
