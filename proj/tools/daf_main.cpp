// daf: reference-free quality scoring for multiple-choice distractors.
//
// Subcommands: score, filter, sweep, report, validate, probe. Every command
// reads a dataset (--data/--format), scores it with one or more backends
// (--backend, repeatable; ensembled by probability averaging) and writes
// line-delimited JSON records to --out ("-" = stdout). A config file given
// with --config supplies defaults; explicit flags override it.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "daf/adapters.hpp"
#include "daf/corpus.hpp"
#include "daf/metrics.hpp"
#include "daf/pipeline.hpp"
#include "daf/probing.hpp"
#include "daf/registry.hpp"
#include "daf/validation.hpp"

namespace {

struct Options {
  std::string data;
  std::string format = "native-jsonl";
  std::vector<std::string> backends;
  std::string equivalence = "token-overlap";
  double tau = 0.25;
  std::uint64_t seed = 0;
  std::string out;
  bool context_free = false;
  int jobs = 1;
  bool post_filter_diversity = false;

  // sweep / validate grids
  std::vector<double> grid;
  int grid_points = 0;

  // probe
  std::string directive;
  std::string mock;
  std::string cache_dir;
  std::string template_file;
  std::string out_refined;
};

daf::PipelineConfig pipeline_config(const Options& o) {
  daf::PipelineConfig cfg;
  cfg.tau = o.tau;
  cfg.backends = o.backends;
  cfg.equivalence = o.equivalence;
  cfg.out = o.out;
  cfg.seed = o.seed;
  cfg.context_free = o.context_free;
  cfg.jobs = o.jobs;
  cfg.post_filter_diversity = o.post_filter_diversity;
  return cfg;
}

daf::QuestionSet load_data(const Options& o) {
  if (o.data.empty()) throw std::runtime_error("--data is required");
  return daf::load_dataset(o.data, daf::dataset_format_from_string(o.format));
}

void emit(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::fwrite(content.data(), 1, content.size(), stdout);
    return;
  }
  daf::atomic_write_text(out, content);
}

std::vector<double> resolve_grid(const Options& o, int default_points) {
  if (!o.grid.empty()) return o.grid;
  const int n = o.grid_points > 0 ? o.grid_points : default_points;
  if (n == 1) return {0.0};
  std::vector<double> g(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<size_t>(i)] = static_cast<double>(i) / (n - 1);
  return g;
}

int cmd_score(const Options& o) {
  const auto set = load_data(o);
  const auto cfg = pipeline_config(o);
  auto backends = daf::BackendRegistry::with_builtins();
  auto equivalences = daf::EquivalenceRegistry::with_builtins();
  daf::register_http_adapters(backends, equivalences);
  const auto result = daf::run_corpus(set, cfg, backends.make_all(cfg.backends),
                                      *equivalences.make(cfg.equivalence));
  emit(o.out, daf::render_report_jsonl(result, cfg));
  std::cerr << "scored " << result.summary.questions << " questions (" << result.summary.failed
            << " failed)\n";
  return 0;
}

int cmd_filter(const Options& o) {
  const auto set = load_data(o);
  const auto cfg = pipeline_config(o);
  auto backends = daf::BackendRegistry::with_builtins();
  auto equivalences = daf::EquivalenceRegistry::with_builtins();
  daf::register_http_adapters(backends, equivalences);
  const auto result = daf::run_corpus(set, cfg, backends.make_all(cfg.backends),
                                      *equivalences.make(cfg.equivalence));
  std::string out;
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const auto& r = result.reports[i];
    const auto& q = set.questions[i];
    nlohmann::ordered_json j;
    j["type"] = "filtered_question";
    j["id"] = r.id;
    j["failed"] = r.failed;
    if (r.failed) {
      j["error"] = r.error;
    } else {
      j["kept"] = r.kept;
      nlohmann::ordered_json kept_texts = nlohmann::ordered_json::array();
      for (int idx : r.kept) kept_texts.push_back(q.options[static_cast<size_t>(idx)]);
      j["kept_distractors"] = kept_texts;
      j["rejected"] = r.rejected;
      nlohmann::ordered_json rej_texts = nlohmann::ordered_json::array();
      for (int idx : r.rejected) rej_texts.push_back(q.options[static_cast<size_t>(idx)]);
      j["rejected_distractors"] = rej_texts;
    }
    out += j.dump();
    out += '\n';
  }
  out += daf::summary_to_json(result.summary, cfg).dump();
  out += '\n';
  emit(o.out, out);
  return 0;
}

int cmd_sweep(const Options& o) {
  const auto set = load_data(o);
  const auto cfg = pipeline_config(o);
  auto backends = daf::BackendRegistry::with_builtins();
  auto equivalences = daf::EquivalenceRegistry::with_builtins();
  daf::register_http_adapters(backends, equivalences);
  const auto points = daf::sweep_tau(set, cfg, resolve_grid(o, 50), backends.make_all(cfg.backends));
  std::string out;
  for (const auto& p : points) {
    nlohmann::ordered_json j;
    j["type"] = "sweep_point";
    j["tau"] = p.tau;
    j["incorrectness_rate_pct"] = p.incorrectness_rate_pct;
    j["kept_distractors"] = p.kept_distractors;
    out += j.dump();
    out += '\n';
  }
  emit(o.out, out);
  return 0;
}

int cmd_report(const Options& o) {
  const auto set = load_data(o);
  const auto cfg = pipeline_config(o);
  auto backends = daf::BackendRegistry::with_builtins();
  auto equivalences = daf::EquivalenceRegistry::with_builtins();
  daf::register_http_adapters(backends, equivalences);
  const auto result = daf::run_corpus(set, cfg, backends.make_all(cfg.backends),
                                      *equivalences.make(cfg.equivalence));
  std::cout << daf::render_summary_table(result.summary, set.name);
  if (!o.out.empty() && o.out != "-")
    emit(o.out, daf::summary_to_json(result.summary, cfg).dump() + "\n");
  return 0;
}

int cmd_validate(const Options& o) {
  const auto set = load_data(o);
  const auto cfg = pipeline_config(o);
  auto backend_reg = daf::BackendRegistry::with_builtins();
  auto equivalences = daf::EquivalenceRegistry::with_builtins();
  daf::register_http_adapters(backend_reg, equivalences);
  const auto backends = backend_reg.make_all(cfg.backends);
  const auto result = daf::run_corpus(set, cfg, backends, *equivalences.make(cfg.equivalence));

  std::vector<daf::ScoredOption> items;
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const auto& r = result.reports[i];
    if (r.failed) continue;
    const auto& q = set.questions[i];
    for (int idx = 0; idx < q.num_options(); ++idx)
      items.push_back(daf::ScoredOption{r.p_c[static_cast<size_t>(idx)],
                                        idx == q.answer_index ? daf::ScoredOption::Label::answer
                                                              : daf::ScoredOption::Label::distractor});
  }

  std::string out;
  auto pr_record = [](const char* type, const std::string& positive, const daf::OperatingPoint& p) {
    nlohmann::ordered_json j;
    j["type"] = type;
    j["positive_class"] = positive;
    j["threshold"] = p.threshold;
    j["precision"] = p.precision;
    j["recall"] = p.recall;
    j["f1"] = p.f1;
    return j.dump() + "\n";
  };
  const auto pr = daf::pr_curve(items);
  for (const auto& p : pr.curve) out += pr_record("pr_point", "incorrect", p);
  out += pr_record("pr_best", "incorrect", pr.best);
  const auto pr_cp = daf::pr_curve_correct_positive(items);
  for (const auto& p : pr_cp.curve) out += pr_record("pr_point", "correct", p);
  out += pr_record("pr_best", "correct", pr_cp.best);

  const auto grid = resolve_grid(o, 101);
  for (const auto& row : daf::operating_chart(items, grid)) {
    nlohmann::ordered_json j;
    j["type"] = "chart_point";
    j["threshold"] = row.threshold;
    j["distractor_capture"] = row.distractor_capture;
    j["answer_capture"] = row.answer_capture;
    out += j.dump();
    out += '\n';
  }

  nlohmann::ordered_json corr;
  corr["type"] = "correlations";
  std::size_t intra_eligible = 0, inter_eligible = 0;
  for (const auto& q : set.questions) {
    if (q.candidate_distribution) {
      ++inter_eligible;
      if (q.distractor_indices().size() >= 2) ++intra_eligible;
    }
  }
  if (intra_eligible > 0) {
    const auto intra = daf::intra_question_correlation(set, backends);
    corr["intra_mean_rho"] =
        intra.mean_rho ? nlohmann::ordered_json(*intra.mean_rho) : nlohmann::ordered_json(nullptr);
    corr["intra_used"] = intra.used;
    corr["intra_excluded_undefined"] = intra.excluded_undefined;
    corr["intra_skipped_ineligible"] = intra.skipped_ineligible;
  } else {
    corr["intra_mean_rho"] = nullptr;
    corr["intra_used"] = 0;
  }
  if (inter_eligible >= 2) {
    const auto inter = daf::inter_question_correlation(set, backends);
    corr["inter_rho"] =
        inter.rho ? nlohmann::ordered_json(*inter.rho) : nlohmann::ordered_json(nullptr);
    corr["inter_questions"] = inter.questions;
  } else {
    corr["inter_rho"] = nullptr;
    corr["inter_questions"] = inter_eligible;
  }
  out += corr.dump();
  out += '\n';
  emit(o.out, out);
  return 0;
}

int cmd_probe(const Options& o) {
  const auto set = load_data(o);
  const auto cfg = pipeline_config(o);
  const auto directive = daf::probe_directive_from_string(o.directive);
  auto backend_reg = daf::BackendRegistry::with_builtins();
  auto equivalences = daf::EquivalenceRegistry::with_builtins();
  daf::register_http_adapters(backend_reg, equivalences);
  const auto backends = backend_reg.make_all(cfg.backends);
  const auto equivalence = equivalences.make(cfg.equivalence);

  daf::PromptTemplate tmpl = daf::default_probe_template();
  if (!o.template_file.empty()) tmpl.text = daf::read_text_file(o.template_file);

  std::unique_ptr<daf::LlmClient> client;
  if (o.mock == "echo") {
    client = std::make_unique<daf::ScriptedLlmClient>(daf::make_echo_client(set, directive, tmpl));
  } else if (!o.mock.empty()) {
    // fixture: {"responses": {"<question id>": "<response>"}, "default": "..."}
    nlohmann::json fixture = nlohmann::json::parse(daf::read_text_file(o.mock));
    auto scripted = std::make_unique<daf::ScriptedLlmClient>(
        fixture.contains("default") ? std::optional<std::string>(fixture["default"].get<std::string>())
                                    : std::nullopt);
    if (fixture.contains("responses")) {
      std::map<std::string, const daf::Question*> by_id;
      for (const auto& q : set.questions) by_id[q.id] = &q;
      for (const auto& [id, resp] : fixture["responses"].items()) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw std::runtime_error("mock fixture: unknown question id: " + id);
        scripted->set(daf::build_probe_prompt(*it->second, directive, tmpl),
                      resp.get<std::string>());
      }
    }
    client = std::move(scripted);
  } else {
    client = std::make_unique<daf::HttpLlmClient>();
  }

  std::optional<daf::ResponseCache> cache;
  if (!o.cache_dir.empty()) cache.emplace(o.cache_dir);

  const auto probe = daf::probe_corpus(set, directive, *client, cfg, backends, *equivalence,
                                       cache ? &*cache : nullptr, tmpl);

  std::string out;
  for (const auto& r : probe.refinements) {
    nlohmann::ordered_json j;
    j["type"] = "refinement";
    j["id"] = r.original_id;
    j["directive"] = daf::to_string(r.directive);
    j["parse_status"] = r.parse_status == daf::RefinedQuestion::ParseStatus::ok ? "ok" : "failed";
    if (r.parse_status == daf::RefinedQuestion::ParseStatus::ok) j["distractors"] = r.distractors;
    out += j.dump();
    out += '\n';
  }
  out += daf::probe_summary_to_json(probe.summary).dump();
  out += '\n';
  emit(o.out, out);
  if (!o.out_refined.empty()) daf::save_dataset(probe.refined_set, o.out_refined);
  std::cerr << "probed " << probe.summary.questions << " questions ("
            << probe.summary.parse_failures << " parse failures)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"reference-free quality metrics for multiple-choice distractors"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "config file with defaults; explicit flags override it");

  app.add_option("--data", o.data, "dataset path");
  app.add_option("--format", o.format, "dataset format: native-jsonl, race-style, cmcqrd-style");
  app.add_option("--backend", o.backends,
                 "scoring backend spec (repeatable; e.g. stub:scores.json, text-stub:t.json, "
                 "constant:0.5, http://host:port/score)");
  app.add_option("--equivalence", o.equivalence,
                 "equivalence scorer spec (token-overlap, table:pairs.json, http://...)");
  app.add_option("--tau", o.tau, "incorrectness threshold in [0,1]");
  app.add_option("--seed", o.seed, "seed recorded in reports");
  app.add_option("--out", o.out, "output path (default stdout)");
  app.add_flag("--context-free", o.context_free, "blank every context before scoring");
  app.add_option("--jobs", o.jobs, "worker threads for question evaluation");
  app.add_flag("--post-filter-diversity", o.post_filter_diversity,
               "also report diversity over the surviving distractors");

  auto* score = app.add_subcommand("score", "per-question reports plus a summary record");
  auto* filter = app.add_subcommand("filter", "emit kept/rejected distractors per question");
  auto* sweep = app.add_subcommand("sweep", "incorrectness rate across a tau grid");
  sweep->add_option("--grid", o.grid, "explicit tau grid values")->delimiter(',');
  sweep->add_option("--grid-points", o.grid_points, "uniform grid size over [0,1] (default 50)");
  auto* report = app.add_subcommand("report", "aggregate table (stdout) and summary record");
  auto* validate = app.add_subcommand("validate",
                                      "detector PR analysis, operating chart, correlations");
  validate->add_option("--grid", o.grid, "operating-chart thresholds")->delimiter(',');
  validate->add_option("--grid-points", o.grid_points,
                       "uniform chart grid size over [0,1] (default 101)");
  auto* probe = app.add_subcommand("probe", "LLM distractor refinement and impact summary");
  probe->add_option("--directive", o.directive, "plaus+ | plaus- | div+ | div-")->required();
  probe->add_option("--mock", o.mock, "'echo' or a fixture file of canned responses");
  probe->add_option("--cache", o.cache_dir, "response cache directory");
  probe->add_option("--template", o.template_file, "prompt template file");
  probe->add_option("--out-refined", o.out_refined, "write the refined dataset here");

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (score->parsed()) return cmd_score(o);
    if (filter->parsed()) return cmd_filter(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (report->parsed()) return cmd_report(o);
    if (validate->parsed()) return cmd_validate(o);
    if (probe->parsed()) return cmd_probe(o);
  } catch (const std::exception& e) {
    nlohmann::ordered_json err;
    err["error"] = e.what();
    err["command"] = command;
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 2;  // unreachable: require_subcommand(1)
}
