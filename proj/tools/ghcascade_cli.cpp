// Command-line front end. Talks to the library only through ghcascade.h.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ghcascade/ghcascade.h"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string device;
  std::string out;
  std::vector<std::string> sets;  // key=value
};

void add_common(CLI::App* app, Common& c, bool with_seed = true) {
  app->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  if (with_seed) app->add_option("--seed", c.seed, "random seed (overrides config)");
  app->add_option("--device", c.device, "compute device (cpu)");
  app->add_option("--out", c.out, "output directory or file");
  app->add_option("--set", c.sets, "override a config key, e.g. --set optimizer.lr=1e-3");
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  return out + "\"";
}

std::string overrides(const Common& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got '" + s + "'");
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) kv.emplace_back("seed", std::to_string(*c.seed));
  if (!c.device.empty()) kv.emplace_back("device", c.device);
  std::string j = "{";
  for (std::size_t i = 0; i < kv.size(); ++i) j += (i ? "," : "") + quote(kv[i].first) + ":" + quote(kv[i].second);
  return j + "}";
}

const char* cstr(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

// Takes ownership of a library string.
std::string take(char* s) {
  std::string out = s ? s : "";
  ghc_free_string(s);
  return out;
}

int check(int status) {
  if (status != GHC_OK) std::cerr << "error: " << ghc_status_name(status) << ": " << ghc_last_error() << "\n";
  return status;
}

int emit(const std::string& text, const std::string& file) {
  if (file.empty()) {
    std::cout << text << "\n";
    return 0;
  }
  std::ofstream f(file);
  f << text << "\n";
  if (!f) {
    std::cerr << "error: IoError: cannot write " << file << "\n";
    return GHC_IO_ERROR;
  }
  return 0;
}

void print_epoch(const char* record, void*) { std::cerr << record << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded shoulder CT segmentation and glenohumeral staging"};
  app.set_version_flag("--version", std::string(ghc_version()));
  app.require_subcommand(1);
  app.footer("Environment: GHCASCADE_CACHE_DIR sets where outputs go when --out is omitted.");

  // phantom generate
  Common ph;
  std::optional<int> count;
  auto* phantom = app.add_subcommand("phantom", "synthetic shoulder phantoms");
  phantom->require_subcommand(1);
  auto* generate = phantom->add_subcommand("generate", "write a stratified phantom cohort and its manifest");
  add_common(generate, ph);
  generate->add_option("--count", count, "number of cases (overrides phantom.count)");

  // train seg / train cls
  Common tr;
  std::string train_manifest;
  auto* train = app.add_subcommand("train", "train one of the networks");
  train->require_subcommand(1);
  auto* seg = train->add_subcommand("seg", "train the segmentation network");
  auto* cls = train->add_subcommand("cls", "train the staging classifier");
  for (auto* sub : {seg, cls}) {
    add_common(sub, tr);
    sub->add_option("--manifest", train_manifest, "dataset manifest (overrides config)")->check(CLI::ExistingFile);
  }

  // infer
  Common inf;
  std::string seg_ckpt, cls_ckpt, ct, case_id, infer_manifest;
  auto* infer = app.add_subcommand("infer", "run the cascade on CT volumes");
  add_common(infer, inf, false);
  infer->add_option("--seg", seg_ckpt, "segmentation checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--cls", cls_ckpt, "classifier checkpoint")->required()->check(CLI::ExistingFile);
  auto* ct_opt = infer->add_option("--ct", ct, "CT volume (.nii)")->check(CLI::ExistingFile);
  auto* man_opt = infer->add_option("--manifest", infer_manifest, "run every case of a manifest")->check(CLI::ExistingFile);
  ct_opt->excludes(man_opt);
  infer->add_option("--case-id", case_id, "case identifier (default: file name)");

  // evaluate
  Common ev;
  std::vector<std::string> preds;
  std::string truth;
  auto* evaluate = app.add_subcommand("evaluate", "score prediction directories against a truth manifest");
  add_common(evaluate, ev, false);
  evaluate->add_option("--pred", preds, "prediction directory (repeat to compare several)")->required();
  evaluate->add_option("--manifest", truth, "truth manifest")->required()->check(CLI::ExistingFile);

  // report
  Common rp;
  std::string reports;
  auto* report = app.add_subcommand("report", "summarise the reports in a directory");
  add_common(report, rp, false);
  report->add_option("--in", reports, "directory of *_report.json files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (generate->parsed()) {
      Common c = ph;
      if (count) c.sets.push_back("phantom.count=" + std::to_string(*count));
      char* manifest = nullptr;
      if (check(ghc_phantom_generate(cstr(c.config), overrides(c).c_str(), cstr(c.out), &manifest))) return 1;
      std::cout << take(manifest) << "\n";
      return 0;
    }
    if (seg->parsed() || cls->parsed()) {
      char* result = nullptr;
      const auto fn = seg->parsed() ? ghc_train_segmentation : ghc_train_classifier;
      if (check(fn(cstr(tr.config), overrides(tr).c_str(), cstr(train_manifest), cstr(tr.out), print_epoch, nullptr,
                   &result))) {
        return 1;
      }
      std::cout << take(result) << "\n";
      return 0;
    }
    if (infer->parsed()) {
      char* resolved = nullptr;
      if (check(ghc_config_resolve(cstr(inf.config), overrides(inf).c_str(), &resolved))) return 1;
      ghc_free_string(resolved);
      std::vector<std::pair<std::string, std::string>> cases;  // (ct path, case id)
      if (!ct.empty()) {
        cases.emplace_back(ct, case_id);
      } else if (!infer_manifest.empty()) {
        // one JSON record per line; only volume_path and id are needed
        std::ifstream in(infer_manifest);
        std::string line;
        const std::string base = std::filesystem::path(infer_manifest).parent_path().string();
        auto field = [](const std::string& l, const std::string& key) {
          const auto k = l.find("\"" + key + "\"");
          if (k == std::string::npos) return std::string();
          const auto a = l.find('"', l.find(':', k) + 1);
          const auto b = l.find('"', a + 1);
          return l.substr(a + 1, b - a - 1);
        };
        while (std::getline(in, line)) {
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          std::filesystem::path p = field(line, "volume_path");
          if (p.is_relative()) p = std::filesystem::path(base) / p;
          cases.emplace_back(p.string(), field(line, "id"));
        }
      } else {
        std::cerr << "error: give --ct or --manifest\n";
        return 2;
      }
      ghc_cascade* cascade = nullptr;
      if (check(ghc_cascade_open(seg_ckpt.c_str(), cls_ckpt.c_str(), &cascade))) return 1;
      int failures = 0;
      for (const auto& [path, id] : cases) {
        char* rep = nullptr;
        if (check(ghc_cascade_run(cascade, path.c_str(), cstr(id), cstr(inf.out), &rep))) {
          ++failures;
          continue;
        }
        std::cout << take(rep) << "\n";
      }
      ghc_cascade_close(cascade);
      return failures ? 1 : 0;
    }
    if (evaluate->parsed()) {
      std::vector<const char*> dirs;
      for (const auto& p : preds) dirs.push_back(p.c_str());
      char* metrics = nullptr;
      if (check(ghc_evaluate(dirs.data(), dirs.size(), truth.c_str(), &metrics))) return 1;
      return emit(take(metrics), ev.out);
    }
    if (report->parsed()) {
      char* summary = nullptr;
      if (check(ghc_report(reports.c_str(), &summary))) return 1;
      return emit(take(summary), rp.out);
    }
  } catch (const CLI::ValidationError& e) {
    return app.exit(e);
  }
  return 0;
}
