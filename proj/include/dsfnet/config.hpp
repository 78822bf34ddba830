#pragma once

#include "dsfnet/trainer.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace dsf {

/// INI text: `key = value` lines under [run], [net], [optim], [data], [ablation], [output].
/// Unknown sections or keys, keys outside a section and malformed values throw std::runtime_error.
/// Missing keys keep their defaults. `origin` only labels error messages.
RunConfig parse_run_config(std::istream& in, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Round-trips through parse_run_config.
void write_run_config(std::ostream& os, const RunConfig& cfg);

}  // namespace dsf
