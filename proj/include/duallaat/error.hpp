#pragma once

#include <stdexcept>
#include <string>

namespace duallaat {

// Each category maps onto one CLI exit code.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace duallaat
