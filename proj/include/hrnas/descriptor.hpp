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

#ifndef HRNAS_DESCRIPTOR_HPP_
#define HRNAS_DESCRIPTOR_HPP_

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrnas/search.hpp"
#include "json.hpp"

// File layout (all integers little-endian):
//   "HRNASDSC" | u32 version | u64 header length | header JSON |
//   tensor blobs in manifest order (IEEE floats) | u32 crc32 of all prior bytes
namespace hrnas {

inline constexpr std::uint32_t kDescriptorVersion = 1;

class DescriptorError : public std::runtime_error {
 public:
  enum class Kind { kIo, kFormat, kVersion, kChecksum };
  DescriptorError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct BlockRecord {
  std::string name;
  std::array<std::vector<int>, 3> conv;  // surviving original indices per kernel group
  std::vector<int> tokens;
  BlockForm form = BlockForm::kActive;
  int initial_units = 0;
};

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<Real> values;
};

struct ArchitectureDescriptor {
  std::uint32_t version = kDescriptorVersion;
  SupernetConfig supernet;
  SearchConfig search;
  nlohmann::json task;  // task spec snapshot; may be null
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<BlockRecord> blocks;
  SearchLog log;
  Flops initial_flops = 0;
  Flops final_flops = 0;
  Metrics final_metrics;
  std::vector<TensorRecord> tensors;  // parameters, then BN running statistics
};

/// 8 hex digits of crc32 over the canonical JSON of both configurations.
std::string config_hash(const SupernetConfig& net, const SearchConfig& search);

/// Snapshot of `net` (structure and every value) plus optional search record.
ArchitectureDescriptor describe(Supernet& net, const SearchConfig& search, const SearchResult* result = nullptr,
                                const nlohmann::json& task = nullptr);

std::vector<std::uint8_t> serialize(const ArchitectureDescriptor& d);
ArchitectureDescriptor deserialize(const std::vector<std::uint8_t>& bytes);

void export_descriptor(const ArchitectureDescriptor& d, const std::string& path);
ArchitectureDescriptor import_descriptor(const std::string& path);

/// Builds the supernet from the snapshot config, prunes it to the recorded
/// masks and loads all values.
std::unique_ptr<Supernet> rebuild(const ArchitectureDescriptor& d);

}  // namespace hrnas

#endif  // HRNAS_DESCRIPTOR_HPP_
