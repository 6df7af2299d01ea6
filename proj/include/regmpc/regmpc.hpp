#pragma once

#include "regmpc/closed_loop.hpp"
#include "regmpc/netsim/nodes.hpp"

namespace regmpc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace regmpc
