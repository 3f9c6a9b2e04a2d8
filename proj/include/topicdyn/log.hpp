#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <utility>

namespace topicdyn {

using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline WarningSink& warning_sink() {
    static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}
} // namespace detail

/// Replace the process-wide warning sink; returns the previous one.
inline WarningSink set_warning_sink(WarningSink sink) {
    return std::exchange(detail::warning_sink(), std::move(sink));
}

inline void warn(const std::string& msg) {
    if (detail::warning_sink())
        detail::warning_sink()(msg);
}

} // namespace topicdyn
