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

#include "hrnas/descriptor.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "hrnas/config.hpp"

namespace hrnas {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'H', 'R', 'N', 'A', 'S', 'D', 'S', 'C'};
constexpr const char* kDtype = sizeof(Real) == 4 ? "float32" : "float64";

using UInt = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DescriptorError(DescriptorError::Kind::kFormat, "descriptor: truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in[pos + i]) << (8 * i));
  pos += sizeof(T);
  return v;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

json log_to_json(const SearchLog& log) {
  json epochs = json::array(), prunes = json::array();
  for (const auto& e : log.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"task_loss", e.task_loss}, {"penalty", e.penalty},
                      {"total_flops", e.total_flops}, {"alive_units", e.alive_units}});
  }
  for (const auto& p : log.prunes) {
    prunes.push_back({{"epoch", p.epoch}, {"task_loss", p.task_loss}, {"removed", p.removed},
                      {"alive_units", p.alive_units}, {"flops_before", p.flops_before},
                      {"flops_after", p.flops_after}});
  }
  return {{"epochs", epochs}, {"prunes", prunes}};
}

SearchLog log_from_json(const json& j) {
  SearchLog log;
  for (const auto& e : j.at("epochs")) {
    log.epochs.push_back({e.at("epoch").get<int>(), e.at("task_loss").get<double>(), e.at("penalty").get<double>(),
                          e.at("total_flops").get<Flops>(), e.at("alive_units").get<int>()});
  }
  for (const auto& p : j.at("prunes")) {
    log.prunes.push_back({p.at("epoch").get<int>(), p.at("task_loss").get<double>(), p.at("removed").get<int>(),
                          p.at("alive_units").get<int>(), p.at("flops_before").get<Flops>(),
                          p.at("flops_after").get<Flops>()});
  }
  return log;
}

BlockForm form_from_string(const std::string& s) {
  if (s == "active") return BlockForm::kActive;
  if (s == "identity") return BlockForm::kIdentity;
  if (s == "zero") return BlockForm::kZero;
  throw DescriptorError(DescriptorError::Kind::kFormat, "descriptor: unknown block form '" + s + "'");
}

}  // namespace

std::string config_hash(const SupernetConfig& net, const SearchConfig& search) {
  const std::string canon = json{{"supernet", to_json(net)}, {"search", to_json(search)}}.dump();
  std::ostringstream os;
  os << std::hex;
  os.width(8);
  os.fill('0');
  os << crc_of(reinterpret_cast<const std::uint8_t*>(canon.data()), canon.size());
  return os.str();
}

ArchitectureDescriptor describe(Supernet& net, const SearchConfig& search, const SearchResult* result,
                                const json& task) {
  ArchitectureDescriptor d;
  d.supernet = net.config();
  d.search = search;
  d.task = task;
  d.seed = search.seed;
  d.config_hash = config_hash(d.supernet, search);
  for (const auto& slot : net.blocks()) {
    BlockRecord r;
    r.name = slot.name;
    for (int g = 0; g < 3; ++g) r.conv[static_cast<std::size_t>(g)] = slot.block->alive_indices(g);
    r.tokens = slot.block->alive_tokens();
    r.form = slot.block->form();
    r.initial_units = slot.block->initial_unit_count();
    d.blocks.push_back(std::move(r));
  }
  if (result != nullptr) {
    d.log = result->log;
    d.initial_flops = result->initial_flops;
    d.final_flops = result->final_flops;
    d.final_metrics = result->final_metrics;
  } else {
    d.initial_flops = d.final_flops = flops_report(net).total;
  }
  net.visit_parameters([&](const std::string& name, Tensor& t) {
    d.tensors.push_back({name, t.shape(), std::vector<Real>(t.data().begin(), t.data().end())});
  });
  net.visit_batch_norms([&](const std::string& name, BatchNorm& bn) {
    const Shape s{static_cast<int>(bn.running_mean.size())};
    d.tensors.push_back({name + ".running_mean", s, bn.running_mean});
    d.tensors.push_back({name + ".running_var", s, bn.running_var});
  });
  return d;
}

std::vector<std::uint8_t> serialize(const ArchitectureDescriptor& d) {
  json blocks = json::array();
  for (const auto& b : d.blocks) {
    blocks.push_back({{"name", b.name},
                      {"conv3", b.conv[0]},
                      {"conv5", b.conv[1]},
                      {"conv7", b.conv[2]},
                      {"tokens", b.tokens},
                      {"form", to_string(b.form)},
                      {"initial_units", b.initial_units}});
  }
  json manifest = json::array();
  for (const auto& t : d.tensors) manifest.push_back({{"name", t.name}, {"shape", t.shape}});
  const json header{{"version", d.version},
                    {"seed", d.seed},
                    {"config_hash", d.config_hash},
                    {"supernet", to_json(d.supernet)},
                    {"search", to_json(d.search)},
                    {"task", d.task},
                    {"blocks", blocks},
                    {"log", log_to_json(d.log)},
                    {"initial_flops", d.initial_flops},
                    {"final_flops", d.final_flops},
                    {"final_metrics",
                     {{"loss", d.final_metrics.loss},
                      {"accuracy", d.final_metrics.accuracy},
                      {"mean_iou", d.final_metrics.mean_iou}}},
                    {"dtype", kDtype},
                    {"tensors", manifest}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, d.version);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : d.tensors) {
    for (Real v : t.values) {
      UInt bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_le<UInt>(out, bits);
    }
  }
  put_le<std::uint32_t>(out, crc_of(out.data(), out.size()));
  return out;
}

ArchitectureDescriptor deserialize(const std::vector<std::uint8_t>& bytes) {
  using K = DescriptorError::Kind;
  if (bytes.size() < sizeof kMagic + 4 + 8 + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    if (bytes.size() >= sizeof kMagic && std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0) {
      throw DescriptorError(K::kChecksum, "descriptor: checksum failure (file truncated)");
    }
    throw DescriptorError(K::kFormat, "descriptor: not a descriptor file");
  }
  std::size_t tail = bytes.size() - 4;
  const std::uint32_t stored = get_le<std::uint32_t>(bytes, tail);
  if (stored != crc_of(bytes.data(), bytes.size() - 4)) {
    throw DescriptorError(K::kChecksum, "descriptor: checksum failure");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kDescriptorVersion) {
    throw DescriptorError(K::kVersion, "descriptor: version " + std::to_string(version) + " unsupported (expected " +
                                           std::to_string(kDescriptorVersion) + ")");
  }
  const auto len = get_le<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size() - 4) throw DescriptorError(K::kFormat, "descriptor: header overruns file");
  ArchitectureDescriptor d;
  try {
    const json h = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                               bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    if (h.at("dtype").get<std::string>() != kDtype) {
      throw DescriptorError(K::kFormat, "descriptor: stored as " + h.at("dtype").get<std::string>() +
                                            ", this build reads " + kDtype);
    }
    d.version = version;
    d.seed = h.at("seed").get<std::uint64_t>();
    d.config_hash = h.at("config_hash").get<std::string>();
    d.supernet = supernet_config_from_json(h.at("supernet"));
    d.search = search_config_from_json(h.at("search"));
    d.task = h.at("task");
    for (const auto& b : h.at("blocks")) {
      BlockRecord r;
      r.name = b.at("name").get<std::string>();
      r.conv[0] = b.at("conv3").get<std::vector<int>>();
      r.conv[1] = b.at("conv5").get<std::vector<int>>();
      r.conv[2] = b.at("conv7").get<std::vector<int>>();
      r.tokens = b.at("tokens").get<std::vector<int>>();
      r.form = form_from_string(b.at("form").get<std::string>());
      r.initial_units = b.at("initial_units").get<int>();
      d.blocks.push_back(std::move(r));
    }
    d.log = log_from_json(h.at("log"));
    d.initial_flops = h.at("initial_flops").get<Flops>();
    d.final_flops = h.at("final_flops").get<Flops>();
    const auto& m = h.at("final_metrics");
    d.final_metrics = {m.at("loss").get<double>(), m.at("accuracy").get<double>(), m.at("mean_iou").get<double>()};
    for (const auto& t : h.at("tensors")) {
      TensorRecord r;
      r.name = t.at("name").get<std::string>();
      r.shape = t.at("shape").get<Shape>();
      const std::size_t n = shape_numel(r.shape);
      r.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (pos + sizeof(UInt) > bytes.size() - 4) throw DescriptorError(K::kFormat, "descriptor: blob overruns file");
        const UInt bits = get_le<UInt>(bytes, pos);
        std::memcpy(&r.values[i], &bits, sizeof bits);
      }
      d.tensors.push_back(std::move(r));
    }
  } catch (const DescriptorError&) {
    throw;
  } catch (const std::exception& e) {
    throw DescriptorError(K::kFormat, std::string("descriptor: malformed header: ") + e.what());
  }
  if (pos != bytes.size() - 4) throw DescriptorError(K::kFormat, "descriptor: trailing bytes before checksum");
  return d;
}

void export_descriptor(const ArchitectureDescriptor& d, const std::string& path) {
  const auto bytes = serialize(d);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DescriptorError(DescriptorError::Kind::kIo, "descriptor: cannot write " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DescriptorError(DescriptorError::Kind::kIo, "descriptor: write failed for " + path);
}

ArchitectureDescriptor import_descriptor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DescriptorError(DescriptorError::Kind::kIo, "descriptor: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::unique_ptr<Supernet> rebuild(const ArchitectureDescriptor& d) {
  using K = DescriptorError::Kind;
  auto net = std::make_unique<Supernet>(d.supernet);
  const auto slots = net->blocks();
  if (slots.size() != d.blocks.size()) throw DescriptorError(K::kFormat, "descriptor: block count mismatch");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const BlockRecord& r = d.blocks[i];
    SearchingBlock& b = *slots[i].block;
    if (r.name != slots[i].name) throw DescriptorError(K::kFormat, "descriptor: block '" + r.name + "' out of order");
    std::vector<UnitRef> doomed;
    for (const auto& u : b.enumerate_search_units()) {
      const auto& keep = u.ref.kind == UnitKind::kToken ? r.tokens : r.conv[static_cast<std::size_t>(u.ref.kind)];
      if (!std::binary_search(keep.begin(), keep.end(), u.ref.index)) doomed.push_back(u.ref);
    }
    b.prune_units(doomed);
    if (b.form() != r.form) throw DescriptorError(K::kFormat, "descriptor: block '" + r.name + "' form mismatch");
  }
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& t : d.tensors) by_name[t.name] = &t;
  auto lookup = [&](const std::string& name, const Shape& shape) -> const TensorRecord& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DescriptorError(K::kFormat, "descriptor: missing tensor '" + name + "'");
    if (it->second->shape != shape) {
      throw DescriptorError(K::kFormat, "descriptor: tensor '" + name + "' has shape " +
                                            shape_str(it->second->shape) + ", expected " + shape_str(shape));
    }
    const TensorRecord* rec = it->second;
    by_name.erase(it);
    return *rec;
  };
  net->visit_parameters([&](const std::string& name, Tensor& t) {
    const auto& rec = lookup(name, t.shape());
    std::copy(rec.values.begin(), rec.values.end(), t.mutable_data().begin());
  });
  net->visit_batch_norms([&](const std::string& name, BatchNorm& bn) {
    const Shape s{static_cast<int>(bn.running_mean.size())};
    const auto& mean = lookup(name + ".running_mean", s).values;
    const auto& var = lookup(name + ".running_var", s).values;
    bn.init_running_stats(mean, var);
  });
  if (!by_name.empty()) {
    throw DescriptorError(K::kFormat, "descriptor: unexpected tensor '" + by_name.begin()->first + "'");
  }
  return net;
}

}  // namespace hrnas
