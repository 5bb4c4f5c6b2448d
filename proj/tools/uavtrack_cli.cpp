// uavtrack: collect demonstrations, train, evaluate and inspect policies.
//
// Every command reads one JSON config (--config) and is reproducible from
// that config and --seed. Exit codes: 0 ok, 1 runtime failure, 2 usage.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>

#include "uavtrack/pipeline.hpp"

namespace fs = std::filesystem;
using namespace uavtrack;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<int> workers;
  std::string split;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_split = true) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)");
  cmd->add_option("--seed", c.seed, "Seed (default: config seed)");
  cmd->add_option("--episodes", c.episodes, "Episode count")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  if (with_split) cmd->add_option("--split", c.split, "Scenario split")->check(CLI::IsMember({"seen", "unseen"}));
  cmd->add_flag("--force", c.force, "Overwrite existing outputs");
}

RunConfig load(const Common& c) {
  if (c.config.empty()) {
    RunConfig r;
    if (const char* env = std::getenv("UAVTRACK_OUTPUT_DIR"); env && *env) r.output_dir = env;
    return r;
  }
  return load_config(c.config);
}

std::uint64_t seed_of(const Common& c, const RunConfig& cfg) { return c.seed.value_or(cfg.seed); }

void write_json(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << j.dump(2) << '\n';
}

void guard_output(const fs::path& p, bool force) {
  if (fs::exists(p) && !force) throw Error("'" + p.string() + "' already exists (use --force)");
}

// ---------------------------------------------------------------------------

int cmd_collect(const Common& c) {
  RunConfig cfg = load(c);
  if (!c.split.empty()) cfg.collection.split = c.split;
  const int n = c.episodes.value_or(cfg.collection.episodes);
  const auto eps = pipeline::collect_episodes(cfg, static_cast<std::size_t>(n), seed_of(c, cfg),
                                              c.workers.value_or(cfg.collection.workers));
  const fs::path out = cfg.dataset_path();
  data::build_dataset_layout(eps, out, pipeline::prompts(), static_cast<std::size_t>(cfg.collection.chunk_size),
                             c.force);
  std::size_t ticks = 0;
  for (const auto& e : eps) ticks += e.control.size();
  std::cout << "wrote " << eps.size() << " episodes (" << ticks << " control ticks) to " << out.string() << '\n';
  return 0;
}

int cmd_train(const Common& c, std::optional<int> steps, double val_fraction) {
  RunConfig cfg = load(c);
  if (steps) cfg.train.total_steps = *steps;
  const fs::path ck_path = cfg.checkpoint_path();
  guard_output(ck_path, c.force);
  auto eps = data::load_dataset(cfg.dataset_path());
  if (c.episodes) eps.resize(std::min(eps.size(), static_cast<std::size_t>(*c.episodes)));
  // The last episodes are held out for the grounding validation metric.
  const auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(eps.size())));
  if (n_val >= eps.size()) throw Error("train: need more episodes than the validation hold-out");
  const std::span<const data::EpisodeRecord> all(eps);
  const auto r = pipeline::train(cfg, all.first(eps.size() - n_val), all.last(n_val), seed_of(c, cfg), 100, &std::cerr);
  fs::create_directories(ck_path.parent_path().empty() ? fs::path(".") : ck_path.parent_path());
  model::save_checkpoint(r.checkpoint, ck_path);

  const fs::path log_path = cfg.output_path() / "train_log.jsonl";
  fs::create_directories(cfg.output_path());
  std::ofstream log(log_path);
  for (const auto& e : r.log)
    log << nlohmann::json{{"step", e.step}, {"loss", e.loss}, {"pos", e.pos}, {"action", e.action},
                          {"lr", e.lr}, {"grad_norm", e.grad_norm}}
               .dump()
        << '\n';
  write_json(cfg.output_path() / "train_summary.json",
             {{"train_episodes", eps.size() - n_val},
              {"val_episodes", n_val},
              {"steps", r.checkpoint.step},
              {"val_pose_mse_initial", r.val_pose_mse_initial},
              {"val_pose_mse_final", r.val_pose_mse_final}});
  std::cout << "checkpoint " << ck_path.string() << " (step " << r.checkpoint.step << "), val pose MSE "
            << r.val_pose_mse_initial << " -> " << r.val_pose_mse_final << '\n';
  return 0;
}

std::optional<model::Checkpoint> checkpoint_for(pipeline::PolicyKind kind, const RunConfig& cfg) {
  if (kind == pipeline::PolicyKind::model || kind == pipeline::PolicyKind::untrained)
    return model::load_checkpoint(cfg.checkpoint_path());
  return std::nullopt;
}

void write_eval_outputs(const fs::path& dir, std::span<const eval::EpisodeLog> logs) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "logs.jsonl");
    for (const auto& l : logs) out << eval::log_json(l).dump() << '\n';
  }
  const auto report = eval::compute_metrics(logs);
  std::ofstream csv(dir / "metrics.csv");
  eval::write_metrics_csv(csv, report);
  std::ofstream txt(dir / "metrics.txt");
  eval::write_metrics_table(txt, report);
  write_json(dir / "metrics.json", eval::metrics_json(report));
  eval::write_metrics_table(std::cout, report);
}

int cmd_eval(const Common& c, const std::string& policy, const std::string& prompts, const std::string& out_dir) {
  RunConfig cfg = load(c);
  const auto kind = pipeline::parse_policy(policy);
  const Split map_split = parse_split(c.split.empty() ? cfg.eval.map_split : c.split);
  const Split prompt_split = parse_split(prompts.empty() ? cfg.eval.prompt_split : prompts);
  const fs::path dir = out_dir.empty() ? cfg.output_path() / "eval" /
                                             (policy + "_" + std::string(to_string(map_split)) + "_" +
                                              std::string(to_string(prompt_split)))
                                       : fs::path(out_dir);
  guard_output(dir / "logs.jsonl", c.force);
  const auto ck = checkpoint_for(kind, cfg);
  const std::uint64_t seed = seed_of(c, cfg);
  const auto logs = pipeline::evaluate(cfg, pipeline::policy_factory(kind, ck ? &*ck : nullptr, seed),
                                       static_cast<std::size_t>(c.episodes.value_or(cfg.eval.episodes)), seed,
                                       map_split, prompt_split, c.workers.value_or(cfg.eval.workers));
  write_eval_outputs(dir, logs);
  std::cout << "logs and metrics in " << dir.string() << '\n';
  return 0;
}

int cmd_report(const std::string& input, const std::string& format) {
  fs::path p = input;
  if (fs::is_directory(p)) p /= "logs.jsonl";
  std::vector<eval::EpisodeLog> logs;
  for (const auto& j : data::read_jsonl(p)) logs.push_back(eval::log_from_json(j));
  const auto report = eval::compute_metrics(logs);
  if (format == "csv") eval::write_metrics_csv(std::cout, report);
  else if (format == "json") std::cout << eval::metrics_json(report).dump(2) << '\n';
  else eval::write_metrics_table(std::cout, report);
  return 0;
}

int cmd_sensitivity(const Common& c, const std::string& policy) {
  RunConfig cfg = load(c);
  const auto kind = pipeline::parse_policy(policy);
  const Split map_split = parse_split(c.split.empty() ? cfg.eval.map_split : c.split);
  const fs::path out = cfg.output_path() / "sensitivity.json";
  guard_output(out, c.force);
  const auto ck = checkpoint_for(kind, cfg);
  const std::uint64_t seed = seed_of(c, cfg);
  const auto plan = pipeline::plan_sensitivity(cfg, static_cast<std::size_t>(c.episodes.value_or(5)), seed, map_split);
  const auto logs = eval::evaluate(plan, pipeline::policy_factory(kind, ck ? &*ck : nullptr, seed),
                                   sim::default_scenarios(), cfg.eval.criteria, {},
                                   c.workers.value_or(cfg.eval.workers));
  const auto raw = eval::sensitivity_from_logs(logs, pipeline::prompts());
  nlohmann::json j;
  for (const auto& [s, cats] : raw)
    for (const auto& [cat, v] : cats) j["raw"][s][cat] = {{"atf", v.atf}, {"sr", v.sr}};
  write_json(out, j);  // raw values survive a degenerate baseline
  const auto table = eval::sensitivity_normalize(raw);
  write_json(out, eval::sensitivity_json(table));
  std::cout << "category   ATF     SR\n";
  for (const auto& [cat, v] : table.mean)
    std::cout << std::left << std::setw(10) << cat << std::fixed << std::setprecision(4) << v.atf << "  " << v.sr
              << '\n';
  return 0;
}

int cmd_attn(const Common& c, int episode, int tick, const std::string& prompt, const std::string& out) {
  const RunConfig cfg = load(c);
  const auto ck = model::load_checkpoint(cfg.checkpoint_path());
  const auto eps = data::load_dataset(cfg.dataset_path());
  if (episode < 0 || episode >= static_cast<int>(eps.size()))
    throw Error("attn-export: episode " + std::to_string(episode) + " out of range");
  data::EpisodeRecord rec = eps[static_cast<std::size_t>(episode)];
  if (!prompt.empty()) rec.prompt = prompt;
  const auto ex = model::build_examples(std::span<const data::EpisodeRecord>(&rec, 1), ck.vocab, ck.norm, ck.model);
  if (ex.empty()) throw Error("attn-export: episode has no vision ticks");
  const int t = tick < 0 ? static_cast<int>(ex.size()) - 1 : tick;
  if (t >= static_cast<int>(ex.size())) throw Error("attn-export: tick " + std::to_string(t) + " out of range");
  const auto map = model::export_attention(ck.ema, ck.model, ex[static_cast<std::size_t>(t)].input);
  if (map.fewer_layers)
    std::cerr << "note: model has " << ck.model.layers << " layers; averaged over " << map.layers_used << '\n';
  const fs::path p = out.empty() ? cfg.output_path() / "attention.csv" : fs::path(out);
  guard_output(p, c.force);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  model::write_csv(f, map.grid);
  std::cout << "wrote " << map.grid.rows() << "x" << map.grid.cols() << " attention grid to " << p.string() << '\n';
  return 0;
}

int cmd_gradcheck(const Common& c) {
  const RunConfig cfg = load(c);
  const std::uint64_t seed = seed_of(c, cfg);
  double worst = 0.0;
  for (std::uint64_t s = seed; s < seed + 3; ++s) {
    const auto r = pipeline::run_gradcheck(s);
    std::cout << "seed " << s << ": max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error
              << " over " << r.checked << " coordinates (worst " << r.worst << ")\n";
    worst = std::max(worst, r.max_rel_error);
  }
  std::cout << "max relative error " << worst << (worst < 1e-4 ? " ok" : " FAIL") << '\n';
  return worst < 1e-4 ? 0 : 1;
}

int cmd_latency(const Common& c, int trials) {
  const RunConfig cfg = load(c);
  model::ModelConfig m = model::ModelConfig::full_scale();
  m.d_model = cfg.model.d_model;
  m.heads = cfg.model.heads;
  m.layers = cfg.model.layers;
  const auto r = pipeline::compare_latency(m, trials, seed_of(c, cfg));
  auto stats = [](const eval::LatencyStats& s) {
    return nlohmann::json{{"trials", s.trials}, {"mean_s", s.mean}, {"p50_s", s.p50}, {"p90_s", s.p90}, {"p99_s", s.p99}};
  };
  const nlohmann::json j{{"compressed", stats(r.compressed)},
                         {"compressed_visual_tokens", r.compressed_tokens},
                         {"stacked", stats(r.stacked)},
                         {"stacked_visual_tokens", r.stacked_tokens},
                         {"time_saved_fraction", r.speedup()}};
  write_json(cfg.output_path() / "latency.json", j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uavtrack: language-conditioned UAV tracking workbench"};
  app.require_subcommand(1);
  Common c;

  auto* collect = app.add_subcommand("collect", "Collect expert demonstrations into a dataset");
  add_common(collect, c);

  auto* train = app.add_subcommand("train", "Train a policy on the collected dataset");
  add_common(train, c, false);
  std::optional<int> steps;
  double val_fraction = 0.1;
  train->add_option("--steps", steps, "Override train.total_steps")->check(CLI::PositiveNumber);
  train->add_option("--val-fraction", val_fraction, "Episodes held out for grounding validation")
      ->check(CLI::Range(0.0, 0.9));

  auto* ev = app.add_subcommand("eval", "Closed-loop evaluation");
  add_common(ev, c);
  std::string policy = "model", prompts, out_dir;
  ev->add_option("--policy", policy, "model, untrained, zero or expert")
      ->check(CLI::IsMember({"model", "untrained", "zero", "expert"}));
  ev->add_option("--prompts", prompts, "Prompt split")->check(CLI::IsMember({"seen", "unseen"}));
  ev->add_option("--out", out_dir, "Output directory");

  auto* report = app.add_subcommand("report", "Print metrics from evaluation logs");
  std::string input, format = "table";
  report->add_option("input", input, "Evaluation directory or logs.jsonl")->required();
  report->add_option("--format", format, "table, csv or json")->check(CLI::IsMember({"table", "csv", "json"}));

  auto* sens = app.add_subcommand("sensitivity", "Prompt-substitution sensitivity on unseen prompts");
  add_common(sens, c);
  std::string sens_policy = "model";
  sens->add_option("--policy", sens_policy, "model, untrained, zero or expert")
      ->check(CLI::IsMember({"model", "untrained", "zero", "expert"}));

  auto* attn = app.add_subcommand("attn-export", "Export text-to-image attention of one dataset frame");
  add_common(attn, c, false);
  int episode = 0, tick = -1;
  std::string attn_prompt, attn_out;
  attn->add_option("--episode", episode, "Dataset episode index");
  attn->add_option("--tick", tick, "Vision tick (default: last)");
  attn->add_option("--prompt", attn_prompt, "Replace the episode prompt");
  attn->add_option("--out", attn_out, "CSV path");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check (3 seeds)");
  add_common(grad, c, false);

  auto* lat = app.add_subcommand("latency", "Encoder latency, compressed vs stacked history");
  add_common(lat, c, false);
  int trials = 100;
  lat->add_option("--trials", trials, "Timed trials (>= 100)")->check(CLI::Range(100, 1000000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (collect->parsed()) return cmd_collect(c);
    if (train->parsed()) return cmd_train(c, steps, val_fraction);
    if (ev->parsed()) return cmd_eval(c, policy, prompts, out_dir);
    if (report->parsed()) return cmd_report(input, format);
    if (sens->parsed()) return cmd_sensitivity(c, sens_policy);
    if (attn->parsed()) return cmd_attn(c, episode, tick, attn_prompt, attn_out);
    if (grad->parsed()) return cmd_gradcheck(c);
    if (lat->parsed()) return cmd_latency(c, trials);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
