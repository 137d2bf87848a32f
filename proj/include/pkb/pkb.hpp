#pragma once

#include "pkb/boost.hpp"
#include "pkb/dataset.hpp"
#include "pkb/errors.hpp"
#include "pkb/increment.hpp"
#include "pkb/io.hpp"
#include "pkb/kernel.hpp"
#include "pkb/linalg.hpp"
#include "pkb/log.hpp"
#include "pkb/loss.hpp"
#include "pkb/metrics.hpp"
#include "pkb/parallel.hpp"
#include "pkb/simulate.hpp"

namespace pkb {
inline constexpr const char* kVersion = "0.1.0";
}
