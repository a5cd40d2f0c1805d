#pragma once

namespace degflow {

constexpr const char* kVersion = "0.1.0";

}  // namespace degflow
