#include "cli.hpp"

#include <algorithm>
#include <functional>
#include <optional>

#include <CLI11.hpp>

#include "config.hpp"
#include "evolvtrip/error.hpp"
#include "pipeline.hpp"

namespace evolvtrip::pipeline {

namespace {

template <typename T>
std::optional<T> opt(const CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"EvolvTrip: mental-state triples, temporal knowledge graphs and ToM benchmarks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EVOLVTRIP_VERSION);

  std::string config_path;
  std::string out_dir, replay, cache_dir, backend;
  app.add_option("-c,--config", config_path, "Pipeline config (JSON)")->required();
  auto* o_out = app.add_option("-o,--out-dir,--out", out_dir, "Output root (overrides output_dir)");
  auto* o_replay = app.add_option("--replay", replay, "Use the replay backend with this script");
  auto* o_cache = app.add_option("--cache-dir", cache_dir, "Response cache directory");
  auto* o_backend = app.add_option("--backend", backend, "Backend name from the config");

  std::function<int(Pipeline&)> action;
  auto sub = [&](const char* name, const char* help, std::function<int(Pipeline&)> fn) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    s->callback([&action, fn] { action = fn; });
    return s;
  };

  sub("ingest", "Read the source corpus and write normalized plots", [](Pipeline& p) { return p.ingest(); });
  sub("extract", "Extract mental-state triples per character and plot", [](Pipeline& p) { return p.extract(); });
  sub("build-kg", "Build temporal knowledge graphs from extracted triples",
      [](Pipeline& p) { return p.build_kg(); });
  sub("genqa", "Generate multiple-choice ToM questions", [](Pipeline& p) { return p.genqa(); });
  sub("verify", "LLM verification with regeneration of rejected questions",
      [](Pipeline& p) { return p.verify(); });
  sub("review-export", "Write review sheets for human verification",
      [](Pipeline& p) { return p.review_export(); });

  std::string review_file;
  auto* s_import = sub("review-import", "Apply a completed question review sheet", [&](Pipeline& p) {
    return p.review_import(review_file);
  });
  s_import->add_option("-f,--file", review_file, "Review CSV")->required();

  EvalFlags ef;
  std::string context, triples, layout;
  auto* s_eval = sub("eval", "Run the evaluation harness", [&](Pipeline& p) { return p.eval(ef); });
  s_eval->add_option("--models", ef.models, "Model ids (default: config eval.models)")->delimiter(',');
  s_eval->add_option("--conditions", ef.conditions, "Condition labels, e.g. current+triples")->delimiter(',');
  auto* o_ctx = s_eval->add_option("--context", context, "current|extended|both")
                    ->check(CLI::IsMember({"current", "extended", "both"}));
  auto* o_tri = s_eval->add_option("--triples", triples, "on|off|both")->check(CLI::IsMember({"on", "off", "both"}));
  auto* o_layout = s_eval->add_option("--layout", layout, "plain|markdown|csv");

  std::string report_layout;
  auto* s_report = sub("report", "Render eval/scores.json", [&](Pipeline& p) {
    return p.report(std::nullopt);
  });
  auto* o_rlayout = s_report->add_option("--layout", report_layout, "plain|markdown|csv");

  sub("emit-ft", "Write fine-tuning JSONL files and the OOD split", [](Pipeline& p) { return p.emit_ft(); });

  std::string source;
  auto* s_stats = sub("stats", "Corpus and dataset statistics", [&](Pipeline& p) { return p.stats(std::nullopt); });
  auto* o_source = s_stats->add_option("--source", source, "Raw corpus path (default: ingested corpus)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    GlobalFlags g;
    g.out_dir = opt<std::filesystem::path>(o_out, out_dir);
    g.replay = opt<std::filesystem::path>(o_replay, replay);
    g.cache_dir = opt<std::filesystem::path>(o_cache, cache_dir);
    g.backend = opt(o_backend, backend);
    ef.context = opt(o_ctx, context);
    ef.triples = opt(o_tri, triples);
    ef.layout = opt(o_layout, layout);
    if (o_rlayout->count()) {
      action = [&](Pipeline& p) { return p.report(report_layout); };
    }
    if (o_source->count()) {
      action = [&](Pipeline& p) { return p.stats(std::filesystem::path(source)); };
    }

    Pipeline pipeline(PipelineConfig::load(config_path), g, out, err);
    return action(pipeline);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace evolvtrip::pipeline
