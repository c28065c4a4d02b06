//
//  log.cpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

#include <cstdlib>
#include <memory>
#include <string_view>

namespace bicilab {

namespace {

spdlog::level::level_enum level_from_env()
{
    const char* env = std::getenv("BICILAB_LOG");
    if (!env)
        return spdlog::level::warn;
    const std::string_view v(env);
    if (v == "error")
        return spdlog::level::err;
    if (v == "info")
        return spdlog::level::info;
    if (v == "debug")
        return spdlog::level::debug;
    return spdlog::level::warn;
}

} // namespace

spdlog::logger& log()
{
    static const std::shared_ptr<spdlog::logger> instance = [] {
        auto l = std::make_shared<spdlog::logger>("bicilab", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("[%l] %v");
        l->set_level(level_from_env());
        return l;
    }();
    return *instance;
}

} // namespace bicilab
