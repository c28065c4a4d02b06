//
//  error.hpp
//  bicilab
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#pragma once

#include <stdexcept>
#include <string>

namespace bicilab {

// Exception categories map one-to-one onto the CLI exit codes:
// UsageError -> 1, DataError -> 2, NumericalError -> 3.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace bicilab
