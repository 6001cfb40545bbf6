/* Copyright 2026 The hrnas Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef HRNAS_CONFIG_HPP_
#define HRNAS_CONFIG_HPP_

#include <optional>
#include <stdexcept>
#include <string>

#include "hrnas/search.hpp"
#include "json.hpp"

// JSON (de)serialization of the three configuration sections. Unknown keys
// are rejected so that typos surface as parse errors.
namespace hrnas {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const SupernetConfig& c);
nlohmann::json to_json(const SearchConfig& c);
nlohmann::json to_json(const TaskSpec& t);

/// Accepts {"preset": "scaled" | "full", ...overrides}; a missing preset
/// starts from the scaled layout.
SupernetConfig supernet_config_from_json(const nlohmann::json& j);
SearchConfig search_config_from_json(const nlohmann::json& j);
TaskSpec task_spec_from_json(const nlohmann::json& j);

struct RunConfig {
  SupernetConfig supernet;
  SearchConfig search;
  std::optional<TaskSpec> task;
  bool seed_in_file = false;
};

/// Parses a file with sections "supernet", "search" and optionally "task".
/// Errors carry the file name and the offending location or key.
RunConfig load_run_config(const std::string& path);
/// A task file holds either a bare task object or {"task": {...}}.
TaskSpec load_task_spec(const std::string& path);

nlohmann::json read_json_file(const std::string& path);

}  // namespace hrnas

#endif  // HRNAS_CONFIG_HPP_
