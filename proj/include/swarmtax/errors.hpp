#pragma once

#include <stdexcept>
#include <string>

namespace swarmtax {

/// A caller violated an operation's precondition.
class ContractError : public std::invalid_argument {
  public:
    explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// Filesystem or stream failure.
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace swarmtax
