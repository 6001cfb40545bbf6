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

#include "hrnas/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace hrnas {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
}

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
      throw ParseError(where + ": unknown key '" + k + "'");
    }
  }
}

template <typename T>
bool take(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return false;
  try {
    if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ParseError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_integer() && !it->is_number_unsigned() && it->get<std::int64_t>() < 0) throw ParseError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ParseError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ParseError("");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw ParseError(where + "." + key + ": unexpected value " + it->dump());
  }
  return true;
}

std::vector<int> int_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of integers");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw ParseError(where + ": expected an array of integers");
    out.push_back(v.get<int>());
  }
  return out;
}

template <typename Fn>
auto wrap_config(Fn fn, const std::string& where) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace

json to_json(const SupernetConfig& c) {
  json mods = json::array();
  for (const auto& m : c.modules) mods.push_back({{"blocks", m.blocks}, {"widths", m.widths}});
  return {{"in_channels", c.in_channels},
          {"input_h", c.input_h},
          {"input_w", c.input_w},
          {"stem_channels", c.stem_channels},
          {"modules", mods},
          {"max_branches", c.max_branches},
          {"expansion", c.expansion},
          {"transformer",
           {{"n", c.transformer.n},
            {"s", c.transformer.s},
            {"d", c.transformer.d},
            {"heads", c.transformer.heads},
            {"token_mode", to_string(c.transformer.token_mode)}}},
          {"head", to_string(c.head)},
          {"classes", c.classes},
          {"seed", c.seed}};
}

json to_json(const SearchConfig& c) {
  return {{"lambda", c.lambda},         {"epsilon", c.epsilon},
          {"prune_period", c.prune_period}, {"epochs", c.epochs},
          {"batch_size", c.batch_size}, {"lr", c.lr},
          {"lr_min", c.lr_min},         {"momentum", c.momentum},
          {"weight_decay", c.weight_decay}, {"recalibration_batches", c.recalibration_batches},
          {"recalibration_batch_size", c.recalibration_batch_size},
          {"seed", c.seed}};
}

json to_json(const TaskSpec& t) {
  return {{"kind", to_string(t.kind)}, {"seed", t.seed},   {"count", t.count},
          {"hw", t.hw},                {"classes", t.classes}, {"noise", t.noise},
          {"val_fraction", t.val_fraction}};
}

SupernetConfig supernet_config_from_json(const json& j) {
  const std::string where = "supernet";
  require_object(j, where);
  reject_unknown(j, where, {"preset", "in_channels", "input", "input_h", "input_w", "stem_channels", "modules",
                            "max_branches", "expansion", "transformer", "head", "classes", "seed"});
  std::string preset = "scaled";
  take(j, "preset", preset, where);
  SupernetConfig c;
  if (preset == "scaled") {
    c = SupernetConfig::scaled();
  } else if (preset == "full") {
    c = SupernetConfig::full();
  } else {
    throw ParseError(where + ".preset: unknown preset '" + preset + "'");
  }
  take(j, "in_channels", c.in_channels, where);
  int input = 0;
  if (take(j, "input", input, where)) c.input_h = c.input_w = input;
  take(j, "input_h", c.input_h, where);
  take(j, "input_w", c.input_w, where);
  take(j, "stem_channels", c.stem_channels, where);
  take(j, "max_branches", c.max_branches, where);
  take(j, "expansion", c.expansion, where);
  take(j, "classes", c.classes, where);
  take(j, "seed", c.seed, where);
  std::string head;
  if (take(j, "head", head, where)) c.head = wrap_config([&] { return head_kind_from_string(head); }, where + ".head");
  if (auto it = j.find("modules"); it != j.end()) {
    if (!it->is_array()) throw ParseError(where + ".modules: expected an array");
    c.modules.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string w = where + ".modules[" + std::to_string(i) + "]";
      const json& m = (*it)[i];
      require_object(m, w);
      reject_unknown(m, w, {"blocks", "widths"});
      if (!m.contains("blocks") || !m.contains("widths")) throw ParseError(w + ": needs 'blocks' and 'widths'");
      c.modules.push_back({int_list(m["blocks"], w + ".blocks"), int_list(m["widths"], w + ".widths")});
    }
  }
  if (auto it = j.find("transformer"); it != j.end()) {
    const std::string w = where + ".transformer";
    require_object(*it, w);
    reject_unknown(*it, w, {"n", "s", "d", "heads", "token_mode"});
    take(*it, "n", c.transformer.n, w);
    take(*it, "s", c.transformer.s, w);
    take(*it, "d", c.transformer.d, w);
    take(*it, "heads", c.transformer.heads, w);
    std::string mode;
    if (take(*it, "token_mode", mode, w)) {
      c.transformer.token_mode = wrap_config([&] { return token_mode_from_string(mode); }, w + ".token_mode");
    }
  }
  wrap_config([&] { c.validate(); return 0; }, where);
  return c;
}

SearchConfig search_config_from_json(const json& j) {
  const std::string where = "search";
  require_object(j, where);
  reject_unknown(j, where, {"lambda", "epsilon", "prune_period", "epochs", "batch_size", "lr", "lr_min",
                            "momentum", "weight_decay", "recalibration_batches", "recalibration_batch_size", "seed"});
  SearchConfig c;
  take(j, "lambda", c.lambda, where);
  take(j, "epsilon", c.epsilon, where);
  take(j, "prune_period", c.prune_period, where);
  take(j, "epochs", c.epochs, where);
  take(j, "batch_size", c.batch_size, where);
  take(j, "lr", c.lr, where);
  take(j, "lr_min", c.lr_min, where);
  take(j, "momentum", c.momentum, where);
  take(j, "weight_decay", c.weight_decay, where);
  take(j, "recalibration_batches", c.recalibration_batches, where);
  take(j, "recalibration_batch_size", c.recalibration_batch_size, where);
  take(j, "seed", c.seed, where);
  wrap_config([&] { c.validate(); return 0; }, where);
  return c;
}

TaskSpec task_spec_from_json(const json& j) {
  const std::string where = "task";
  require_object(j, where);
  reject_unknown(j, where, {"kind", "seed", "count", "hw", "classes", "noise", "val_fraction"});
  TaskSpec t;
  std::string kind;
  if (take(j, "kind", kind, where)) t.kind = wrap_config([&] { return task_kind_from_string(kind); }, where + ".kind");
  take(j, "seed", t.seed, where);
  take(j, "count", t.count, where);
  take(j, "hw", t.hw, where);
  take(j, "classes", t.classes, where);
  take(j, "noise", t.noise, where);
  take(j, "val_fraction", t.val_fraction, where);
  return t;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  const json j = read_json_file(path);
  try {
    require_object(j, "config");
    reject_unknown(j, "config", {"supernet", "search", "task", "seed"});
    RunConfig rc;
    rc.supernet = supernet_config_from_json(j.value("supernet", json::object()));
    rc.search = search_config_from_json(j.value("search", json::object()));
    if (j.contains("task")) rc.task = task_spec_from_json(j["task"]);
    rc.seed_in_file = j.contains("seed") || (j.contains("search") && j["search"].contains("seed")) ||
                      (j.contains("supernet") && j["supernet"].contains("seed"));
    if (j.contains("seed")) {
      std::uint64_t seed = 0;
      take(j, "seed", seed, "config");
      rc.supernet.seed = rc.search.seed = seed;
    }
    return rc;
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

TaskSpec load_task_spec(const std::string& path) {
  const json j = read_json_file(path);
  try {
    if (j.is_object() && j.contains("task")) return task_spec_from_json(j["task"]);
    return task_spec_from_json(j);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace hrnas
