#pragma once

namespace topicdyn {

inline constexpr const char* kPipelineVersion = "topicdyn/1.0";
inline constexpr int kFormatVersion = 1;

} // namespace topicdyn
