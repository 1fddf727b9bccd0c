/* Copyright 2026 The Ada2Net Authors. All Rights Reserved.

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

// ada2net: synthesize data, train, translate, evaluate, report complexity,
// self-check. Data goes to files or stdout, diagnostics to stderr; the exit
// code is 0 iff the command succeeded.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ada2net/io/pixmap.hpp"
#include "ada2net/metrics/complexity.hpp"
#include "ada2net/metrics/evaluate.hpp"
#include "ada2net/training/trainer.hpp"
#include "ada2net/verify.hpp"

namespace fs = std::filesystem;
using namespace ada2net;

namespace {

training::TrainConfig loadConfig(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return training::parseConfig(in);
}

std::ofstream openOut(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  return os;
}

void ensureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw FormatError("cannot create directory '" + dir.string() + "'");
}

// --- synth-data ------------------------------------------------------------

struct SynthArgs {
  std::size_t domains = 2, count = 64, size = 32;
  std::uint64_t seed = 1;
  std::uint64_t firstIndex = 0;
  std::string out;
};

int synthData(const SynthArgs& a) {
  const training::SyntheticDataset ds(a.domains, a.size, a.seed);
  const fs::path dir(a.out);
  ensureDir(dir);
  std::vector<io::ManifestEntry> entries;
  for (std::size_t d = 0; d < a.domains; ++d)
    for (std::size_t i = 0; i < a.count; ++i) {
      const std::string name = "domain" + std::to_string(d) + "_" + std::to_string(i) + ".ppm";
      io::writePixmap(dir / name, ds.sample(d, a.firstIndex + i), a.size, a.size);
      entries.push_back({name, d});
    }
  auto os = openOut(dir / io::kManifestName);
  io::writeManifest(os, entries);
  std::cerr << "wrote " << entries.size() << " images to " << dir << '\n';
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out, resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations;
};

int train(const TrainArgs& a) {
  auto config = loadConfig(a.config);
  if (a.seed) config.seed = *a.seed;
  if (a.iterations) config.iterations = *a.iterations;
  training::validate(config);
  auto data = std::make_shared<training::ImageSet>(
      io::loadImageSet(a.data, config.model.numDomains));
  const fs::path out(a.out);
  ensureDir(out);

  std::optional<training::Trainer> trainer;
  if (!a.resume.empty()) {
    trainer.emplace(training::Trainer::load(a.resume, data));
    if (a.iterations) std::cerr << "note: iteration count comes from --iterations\n";
    std::cerr << "resumed at iteration " << trainer->iteration() << '\n';
  } else {
    trainer.emplace(config, data);
  }
  const auto& cfg = a.resume.empty() ? config : trainer->config();
  const std::size_t total = a.iterations ? *a.iterations : cfg.iterations;

  const bool append = !a.resume.empty() && fs::exists(out / "losses.csv");
  std::ofstream lossCsv(out / "losses.csv", append ? std::ios::app : std::ios::trunc);
  std::ofstream routingCsv(out / "routing.csv", append ? std::ios::app : std::ios::trunc);
  if (!lossCsv || !routingCsv) throw FormatError("cannot write logs in '" + out.string() + "'");
  if (!append) {
    losses::writeLossHeader(lossCsv);
    nn::writeLabelRoutingHeader(routingCsv);
  }
  {
    auto cfgOut = openOut(out / "config.txt");
    cfgOut << training::formatConfig(cfg);
  }

  const auto start = std::chrono::steady_clock::now();
  while (trainer->iteration() < total) {
    const std::size_t it = trainer->iteration();
    losses::LossReport report;
    try {
      report = trainer->step();
    } catch (const NumericError& e) {
      trainer->save((out / "aborted.ckpt").string());
      throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(it) +
                         "; state saved to aborted.ckpt");
    }
    losses::writeLossRow(lossCsv, it, report);
    if (cfg.model.gateMode != nn::GateMode::kDisabled)
      nn::writeLabelRouting(routingCsv, it, trainer->translationDecisions(),
                            trainer->lastTargets(), cfg.model.branches);
    if (cfg.checkpointEvery && (it + 1) % cfg.checkpointEvery == 0)
      trainer->save((out / ("checkpoint_" + std::to_string(it + 1) + ".ckpt")).string());
    if ((it + 1) % 50 == 0 || it + 1 == total) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "iteration " << it + 1 << "/" << total << " recCyc " << report.recCyc
                << " totalGen " << report.totalGen << " totalDis " << report.totalDis << " ("
                << secs << " s)\n";
    }
  }
  trainer->save((out / "final.ckpt").string());
  std::cerr << "saved " << (out / "final.ckpt").string() << '\n';
  return 0;
}

// --- translate -------------------------------------------------------------

struct TranslateArgs {
  std::string ckpt, in, out, trace;
  std::size_t target = 0;
};

int translate(const TranslateArgs& a) {
  const auto trainer = training::Trainer::load(a.ckpt);
  const auto& g = trainer.generator();
  const auto numDomains = trainer.config().model.numDomains;
  if (a.target >= numDomains)
    throw ConfigError("target domain " + std::to_string(a.target) + " out of range for " +
                      std::to_string(numDomains) + " domains");
  const auto image = io::readPixmap(a.in);
  const auto size = trainer.config().model.imageSize;
  if (image.height != size || image.width != size)
    throw ShapeError("input is " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + ", checkpoint expects " +
                     std::to_string(size) + "x" + std::to_string(size));
  const auto result = training::translate(
      g, nd::Tensor<float>({1, 3, image.height, image.width}, image.planes), {a.target});
  const auto values = result.image.values();
  io::writePixmap(a.out, std::vector<float>(values.begin(), values.end()), image.height,
                  image.width);
  if (!a.trace.empty()) {
    auto os = openOut(a.trace);
    nn::writeGateTraceHeader(os);
    nn::writeGateTrace(os, trainer.iteration(), result.decisions);
  }
  return 0;
}

// --- eval-fid --------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data, extractor = "randomConvNet", out;
  std::optional<std::size_t> target;
  std::uint64_t seed = metrics::FeatureExtractor::kDefaultSeed;
  bool passthrough = false;
};

int evalFid(const EvalArgs& a) {
  std::optional<training::Trainer> trainer;
  std::size_t numDomains = 0;
  if (!a.ckpt.empty()) {
    trainer.emplace(training::Trainer::load(a.ckpt));
    numDomains = trainer->config().model.numDomains;
  } else if (!a.passthrough) {
    throw ConfigError("eval-fid: --ckpt is required unless --passthrough is given");
  }
  const auto set = io::loadImageSet(a.data, numDomains);
  if (trainer && set.height != trainer->config().model.imageSize)
    throw ShapeError("eval-fid: images do not match the checkpoint's image size");
  std::vector<std::size_t> targets;
  if (a.target) {
    if (*a.target >= set.numDomains)
      throw ConfigError("target domain " + std::to_string(*a.target) + " out of range");
    targets = {*a.target};
  } else {
    targets.resize(set.numDomains);
    std::iota(targets.begin(), targets.end(), std::size_t{0});
  }
  const metrics::FeatureExtractor fx(metrics::parseFeatureKind(a.extractor), a.seed);
  std::cerr << "features: " << toString(fx.kind()) << " (" << fx.dim()
            << " dims), unbiased covariance\n";
  const nn::Generator<float>* g = a.passthrough ? nullptr : &trainer->generator();
  const auto report = metrics::fidReport(g, set, targets, fx);
  if (a.out.empty()) {
    metrics::writeFidCsv(std::cout, report);
  } else {
    auto os = openOut(a.out);
    metrics::writeFidCsv(os, report);
  }
  return 0;
}

// --- complexity ------------------------------------------------------------

int complexity(const std::string& configPath, const std::string& csvPath) {
  const auto config = loadConfig(configPath);
  const auto report = metrics::complexityReport(config.model);
  metrics::writeComplexityText(std::cout, report);
  if (!csvPath.empty()) {
    auto os = openOut(csvPath);
    metrics::writeComplexityCsv(os, report);
  }
  return 0;
}

// --- self-check ------------------------------------------------------------

int selfCheck(const std::string& fault) {
  std::optional<nd::FaultInjection> injection;
  if (!fault.empty()) {
    injection.emplace(fault);
    std::cerr << "injecting a faulty backward rule into '" << fault << "'\n";
  }
  const auto start = std::chrono::steady_clock::now();
  const auto results = verify::runSelfCheck(&std::cout);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << results.size() - failed << "/" << results.size() << " checks passed in " << secs
            << " s\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive inference graph image-to-image translation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synthCmd = app.add_subcommand("synth-data", "Write a synthetic multi-domain image set");
  synthCmd->add_option("--domains", synth.domains, "Number of domains")->check(CLI::PositiveNumber);
  synthCmd->add_option("--count", synth.count, "Images per domain")->check(CLI::PositiveNumber);
  synthCmd->add_option("--size", synth.size, "Image height and width")->check(CLI::Range(8, 4096));
  synthCmd->add_option("--seed", synth.seed, "Dataset seed");
  synthCmd->add_option("--first-index", synth.firstIndex, "Index of the first sample");
  synthCmd->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs trainArgs;
  auto* trainCmd = app.add_subcommand("train", "Train a generator/discriminator pair");
  trainCmd->add_option("--config", trainArgs.config, "key=value config file");
  trainCmd->add_option("--data", trainArgs.data, "Directory with manifest.csv")->required();
  trainCmd->add_option("--out", trainArgs.out, "Checkpoint and log directory")->required();
  trainCmd->add_option("--resume", trainArgs.resume, "Continue from a checkpoint");
  trainCmd->add_option("--seed", trainArgs.seed, "Override the config seed");
  trainCmd->add_option("--iterations", trainArgs.iterations, "Override the iteration count");

  TranslateArgs tr;
  auto* trCmd = app.add_subcommand("translate", "Translate one image to a target domain");
  trCmd->add_option("--ckpt", tr.ckpt, "Checkpoint")->required();
  trCmd->add_option("--in", tr.in, "Input P6 pixmap")->required();
  trCmd->add_option("--target", tr.target, "Target domain index")->required();
  trCmd->add_option("--out", tr.out, "Output P6 pixmap")->required();
  trCmd->add_option("--trace", tr.trace, "Write gate decisions as CSV");

  EvalArgs ev;
  auto* evCmd = app.add_subcommand("eval-fid", "Per-domain FID of translations against real images");
  evCmd->add_option("--ckpt", ev.ckpt, "Checkpoint");
  evCmd->add_option("--data", ev.data, "Directory with manifest.csv")->required();
  evCmd->add_option("--target", ev.target, "Only this target domain");
  evCmd->add_option("--extractor", ev.extractor, "rawPixels | randomConvNet");
  evCmd->add_option("--seed", ev.seed, "Random-convnet feature seed");
  evCmd->add_option("--out", ev.out, "CSV path (default: stdout)");
  evCmd->add_flag("--passthrough", ev.passthrough,
                  "Identity generator: compare each domain with itself");

  std::string complexityConfig, complexityCsv;
  auto* cxCmd = app.add_subcommand("complexity", "Parameter and FLOP comparison table");
  cxCmd->add_option("--config", complexityConfig, "key=value config file");
  cxCmd->add_option("--csv", complexityCsv, "Also write the table as CSV");

  std::string fault;
  auto* scCmd = app.add_subcommand("self-check", "Gradient, sampling, FID and FLOP checks");
  scCmd->add_option("--inject-fault", fault, "Corrupt a primitive's backward rule")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, std::cerr, std::cerr);
  }

  try {
    if (*synthCmd) return synthData(synth);
    if (*trainCmd) return train(trainArgs);
    if (*trCmd) return translate(tr);
    if (*evCmd) return evalFid(ev);
    if (*cxCmd) return complexity(complexityConfig, complexityCsv);
    if (*scCmd) return selfCheck(fault);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
