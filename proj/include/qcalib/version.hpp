#pragma once

namespace qcalib {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qcalib
