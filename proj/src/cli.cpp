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

#include "hrnas/cli.hpp"

#include <zlib.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hrnas/config.hpp"
#include "hrnas/descriptor.hpp"

namespace hrnas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string file_checksum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << static_cast<std::uint32_t>(crc);
  return os.str();
}

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("HRNAS_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw ParseError(std::string("HRNAS_SEED: not an unsigned integer: '") + v + "'");
  }
}

json plot_data(const ArchitectureDescriptor& d) {
  json blocks = json::array();
  for (const auto& b : d.blocks) {
    const int c3 = static_cast<int>(b.conv[0].size()), c5 = static_cast<int>(b.conv[1].size());
    const int c7 = static_cast<int>(b.conv[2].size()), tk = static_cast<int>(b.tokens.size());
    blocks.push_back({{"name", b.name},
                      {"conv3", c3},
                      {"conv5", c5},
                      {"conv7", c7},
                      {"tokens", tk},
                      {"removed", b.initial_units - c3 - c5 - c7 - tk},
                      {"initial", b.initial_units},
                      {"form", to_string(b.form)}});
  }
  return {{"blocks", blocks}};
}

struct Options {
  std::string config, task, out, descriptor, out_file;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  bool quiet = false;
  bool no_verify = false;
};

int cmd_search(const Options& o, std::ostream& out, std::ostream& err) {
  const std::string started = utc_now();
  RunConfig rc = load_run_config(o.config);
  TaskSpec task;
  if (!o.task.empty()) {
    task = load_task_spec(o.task);
  } else if (rc.task) {
    task = *rc.task;
  } else {
    throw ParseError(o.config + ": no task section and no --task file");
  }
  if (o.seed) {
    rc.supernet.seed = rc.search.seed = *o.seed;
  } else if (!rc.seed_in_file) {
    if (auto s = env_seed()) rc.supernet.seed = rc.search.seed = *s;
  }
  if (o.lambda) rc.search.lambda = *o.lambda;
  rc.search.validate();

  const ToyDataset data = make_dataset(task);
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  SearchResult result;
  try {
    result = search(rc.supernet, rc.search, data, [&](const EpochStats& e) {
      if (!o.quiet) {
        out << "epoch " << e.epoch << " task_loss " << e.task_loss << " penalty " << e.penalty << " flops "
            << e.total_flops << " units " << e.alive_units << "\n";
      }
    });
  } catch (const TrainingAborted& e) {
    write_text(dir / "abort.json", e.snapshot() + "\n");
    err << "hrnas: " << e.what() << " (snapshot in " << (dir / "abort.json").string() << ")\n";
    return kTrainingAborted;
  }
  const ArchitectureDescriptor desc = describe(*result.net, rc.search, &result, to_json(task));
  export_descriptor(desc, (dir / "descriptor.hrnas").string());
  write_text(dir / "search_log.csv", result.log.to_csv());
  const FlopsReport report = flops_report(*result.net);
  write_text(dir / "flops.json", report.to_json() + "\n");
  write_text(dir / "flops.txt", report.to_table());

  json artifacts = json::array();
  for (const char* f : {"descriptor.hrnas", "search_log.csv", "flops.json", "flops.txt"}) {
    artifacts.push_back({{"file", f}, {"crc32", file_checksum((dir / f).string())},
                         {"bytes", fs::file_size(dir / f)}});
  }
  const json manifest{{"command", "search"},
                      {"config_paths", {{"config", o.config}, {"task", o.task.empty() ? o.config : o.task}}},
                      {"seed", rc.search.seed},
                      {"lambda", rc.search.lambda},
                      {"output_dir", o.out},
                      {"started", started},
                      {"finished", utc_now()},
                      {"artifacts", artifacts}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << "initial_flops " << result.initial_flops << "\nfinal_flops " << result.final_flops << "\n";
  if (rc.supernet.head == HeadKind::kDense) {
    out << "pixel_accuracy " << result.final_metrics.accuracy << "\nmean_iou " << result.final_metrics.mean_iou
        << "\n";
  } else {
    out << "accuracy " << result.final_metrics.accuracy << "\n";
  }
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const ArchitectureDescriptor d = import_descriptor(o.descriptor);
  TaskSpec task;
  if (!o.task.empty()) {
    task = load_task_spec(o.task);
  } else if (!d.task.is_null()) {
    task = task_spec_from_json(d.task);
  } else {
    throw ParseError(o.descriptor + ": descriptor holds no task; pass --task");
  }
  auto net = rebuild(d);
  const ToyDataset data = make_dataset(task);
  const Metrics m = evaluate(*net, data, data.val.empty() ? data.train : data.val, d.search.batch_size);
  out << std::setprecision(9);
  if (d.supernet.head == HeadKind::kDense) {
    out << "pixel_accuracy " << m.accuracy << "\nmean_iou " << m.mean_iou << "\n";
  } else {
    out << "accuracy " << m.accuracy << "\n";
  }
  out << "loss " << m.loss << "\n";
  return kOk;
}

int cmd_flops(const Options& o, std::ostream& out, std::ostream& err) {
  std::unique_ptr<Supernet> net;
  if (!o.descriptor.empty()) {
    net = rebuild(import_descriptor(o.descriptor));
  } else {
    net = std::make_unique<Supernet>(load_run_config(o.config).supernet);
  }
  const FlopsReport report = flops_report(*net);
  json j = json::parse(report.to_json());
  if (!o.no_verify) {
    const Flops counted = brute_force_count(*net);
    j["brute_force_total"] = counted;
    if (counted != report.total) {
      err << "hrnas: closed-form total " << report.total << " differs from counted " << counted << "\n";
      return kFailure;
    }
  }
  const fs::path dir(o.out.empty() ? "." : o.out);
  fs::create_directories(dir);
  write_text(dir / "flops.json", j.dump(2) + "\n");
  write_text(dir / "flops.txt", report.to_table());
  out << report.to_table();
  return kOk;
}

int cmd_plotdata(const Options& o, std::ostream& out) {
  ArchitectureDescriptor d;
  if (!o.descriptor.empty()) {
    d = import_descriptor(o.descriptor);
  } else {
    const RunConfig rc = load_run_config(o.config);
    Supernet net(rc.supernet);
    d = describe(net, rc.search);
  }
  const std::string text = plot_data(d).dump(2) + "\n";
  if (o.out_file.empty()) {
    out << text;
  } else {
    write_text(o.out_file, text);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-branch supernet search with channel and token pruning", "hrnas"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  double lambda = 0;

  auto* s = app.add_subcommand("search", "Run the progressive-shrinking search");
  s->add_option("--config", o.config, "Configuration file (JSON)")->required()->check(CLI::ExistingFile);
  s->add_option("--task", o.task, "Task file (JSON)")->check(CLI::ExistingFile);
  s->add_option("--out", o.out, "Output directory")->required();
  auto* seed_opt = s->add_option("--seed", seed, "Seed (overrides file and HRNAS_SEED)");
  auto* lambda_opt = s->add_option("--lambda", lambda, "Penalty coefficient (overrides file)");
  s->add_flag("--quiet", o.quiet, "Suppress per-epoch output");

  auto* e = app.add_subcommand("eval", "Evaluate a descriptor on the val split");
  e->add_option("--descriptor", o.descriptor, "Descriptor file")->required()->check(CLI::ExistingFile);
  e->add_option("--task", o.task, "Task file (defaults to the descriptor's task)")->check(CLI::ExistingFile);

  auto* f = app.add_subcommand("flops", "Write the FLOPs report");
  auto* fd = f->add_option("--descriptor", o.descriptor, "Descriptor file")->check(CLI::ExistingFile);
  auto* fc = f->add_option("--config", o.config, "Configuration file")->check(CLI::ExistingFile);
  fd->excludes(fc);
  f->add_option("--out", o.out, "Output directory (default: current)");
  f->add_flag("--no-verify", o.no_verify, "Skip the instrumented recount");

  auto* p = app.add_subcommand("plotdata", "Per-block unit counts as JSON");
  auto* pd = p->add_option("--descriptor", o.descriptor, "Descriptor file")->check(CLI::ExistingFile);
  auto* pc = p->add_option("--config", o.config, "Configuration file")->check(CLI::ExistingFile);
  pd->excludes(pc);
  p->add_option("--out", o.out_file, "Output file (default: stdout)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    app.parse(rev);
    if ((f->parsed() && o.descriptor.empty() && o.config.empty()) ||
        (p->parsed() && o.descriptor.empty() && o.config.empty())) {
      throw CLI::RequiredError("--descriptor or --config");
    }
  } catch (const CLI::Success&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "hrnas: " << ex.what() << "\n";
    return kParseError;
  }
  if (seed_opt->count() > 0) o.seed = seed;
  if (lambda_opt->count() > 0) o.lambda = lambda;

  try {
    if (s->parsed()) return cmd_search(o, out, err);
    if (e->parsed()) return cmd_eval(o, out);
    if (f->parsed()) return cmd_flops(o, out, err);
    return cmd_plotdata(o, out);
  } catch (const ParseError& ex) {
    err << "hrnas: " << ex.what() << "\n";
    return kParseError;
  } catch (const ConfigError& ex) {
    err << "hrnas: configuration error: " << ex.what() << "\n";
    return kParseError;
  } catch (const DescriptorError& ex) {
    err << "hrnas: " << ex.what() << "\n";
    return ex.kind() == DescriptorError::Kind::kIo ? kFailure : kChecksumError;
  } catch (const std::exception& ex) {
    err << "hrnas: " << ex.what() << "\n";
    return kFailure;
  }
}

}  // namespace hrnas::cli
