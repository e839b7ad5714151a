// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ddns {

/// Error categories; the numeric values double as process exit codes.
enum class ErrorKind : int { Config = 2, Data = 3, Model = 4 };

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class ConfigError : public Error
{
public:
    explicit ConfigError(const std::string &what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error
{
public:
    explicit DataError(const std::string &what) : Error(ErrorKind::Data, what) {}
};

class ModelError : public Error
{
public:
    explicit ModelError(const std::string &what) : Error(ErrorKind::Model, what) {}
};

const char *to_string(ErrorKind kind) noexcept;

} // namespace ddns
