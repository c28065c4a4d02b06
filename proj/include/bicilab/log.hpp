//
//  log.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#pragma once

#include <spdlog/spdlog.h>

namespace bicilab {

/// Shared stderr logger. Level comes from BICILAB_LOG (error|warn|info|debug), default warn.
spdlog::logger& log();

} // namespace bicilab
