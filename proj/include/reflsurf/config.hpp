// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// Flat key = value training configuration.
//
#pragma once

#include <reflsurf/optim.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace reflsurf {

class ConfigError : public std::runtime_error {
  public:
    ConfigError(const std::string &key, const std::string &what)
        : std::runtime_error(key.empty() ? what : key + ": " + what), key_(key) {}
    const std::string &key() const { return key_; }

  private:
    std::string key_;
};

struct ConfigKeyInfo {
    std::string name;
    std::string help;
    std::string defaultValue;
};

/// Every accepted key with its default, in file order.
std::vector<ConfigKeyInfo> configKeys();

/// Sets one key. Unknown keys and unparsable values raise ConfigError.
void setConfigValue(TrainConfig &cfg, const std::string &key, const std::string &value);
std::string getConfigValue(const TrainConfig &cfg, const std::string &key);

/// Lines of `key = value`; `#` starts a comment. Duplicate keys are an error.
/// The result is validated.
TrainConfig parseConfig(const std::string &text, const std::string &name = "<memory>");
TrainConfig loadConfig(const std::string &path);
/// Writes every key; parseConfig(formatConfig(c)) reproduces c exactly.
std::string formatConfig(const TrainConfig &cfg);

/// Runs the loss and schedule validators, rethrowing as ConfigError.
void validateConfig(const TrainConfig &cfg);

} // namespace reflsurf
