#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fcm/difficulty.hpp"
#include "fcm/pipeline.hpp"
#include "fcm/theory.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fcm;

namespace {

int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  f << j.dump(1) << "\n";
}

// Every command leaves a reproducibility record next to its outputs.
void write_run_record(const std::string& dir, const std::string& command,
                      const json& config, uint64_t seed,
                      const std::vector<std::string>& artifacts,
                      const json& extra = json::object()) {
  json record{{"command", command}, {"config", config}, {"seed", seed},
              {"timestamp", now_seconds()}, {"artifacts", artifacts}};
  for (const auto& [k, v] : extra.items()) record[k] = v;
  write_json(dir + "/run_record_" + command + ".json", record);
}

std::vector<int64_t> parse_int_list(const std::string& csv) {
  std::vector<int64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoll(item));
  if (out.empty()) throw UsageError("empty list: " + csv);
  return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw UsageError("empty list: " + csv);
  return out;
}

int cmd_generate_data(const std::string& out_dir, uint64_t seed, int train_per_family,
                      int test_per_family) {
  GenerationSpec spec;
  spec.train_per_family = train_per_family;
  spec.test_per_family = test_per_family;
  spec.validate();
  auto manifest = generate_dataset(spec, seed, out_dir);
  write_run_record(out_dir, "generate-data",
                   json{{"train_per_family", train_per_family},
                        {"test_per_family", test_per_family}},
                   seed, {out_dir + "/manifest.json"},
                   json{{"sequences", manifest.entries.size()}});
  std::cout << "wrote " << manifest.entries.size() << " sequences to " << out_dir
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, int stage_flag, const std::string& dataset,
              const std::string& out_dir, int64_t seed_flag, int64_t epochs_flag,
              int hybrid_flag, bool resume) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = TrainConfig::from_toml(TomlTable::parse_file(config_path));
  // CLI flags override the config file.
  if (stage_flag > 0) cfg.stage = stage_flag;
  if (!dataset.empty()) cfg.dataset_dir = dataset;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed_flag >= 0) cfg.seed = static_cast<uint64_t>(seed_flag);
  if (epochs_flag > 0) cfg.epochs = epochs_flag;
  if (hybrid_flag >= 0) cfg.hybrid = hybrid_flag != 0;
  if (resume) cfg.resume = true;
  cfg.validate();

  auto path = run_stage(cfg);
  write_run_record(cfg.out_dir, "train",
                   json{{"stage", cfg.stage}, {"dataset_dir", cfg.dataset_dir},
                        {"epochs", cfg.stage_epochs()}, {"hybrid", cfg.hybrid},
                        {"block_variant", cfg.block_variant}},
                   cfg.seed, {path}, json{{"checkpoint_hash", file_hash(path)}});
  std::cout << "stage " << cfg.stage << " checkpoint: " << path << "\n";
  return 0;
}

int cmd_sample(const std::string& run_dir, const std::string& caption, int64_t steps,
               double guidance, uint64_t seed, int64_t length,
               const std::string& out_path) {
  auto model = LoadedModel::load(run_dir);
  SamplerConfig cfg{steps, guidance};
  auto motion = sample_motion(model, caption, length, cfg, seed);
  save_motion(out_path, motion);
  write_run_record(fs::path(out_path).parent_path().empty()
                       ? std::string(".")
                       : fs::path(out_path).parent_path().string(),
                   "sample",
                   json{{"caption", caption}, {"steps", steps}, {"cfg", guidance},
                        {"length", length}, {"run_dir", run_dir}},
                   seed, {out_path},
                   json{{"checkpoint_hash", file_hash(run_dir + "/stage3.ckpt")}});
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& dataset, int64_t steps,
             double guidance, uint64_t seed, const std::string& out_path) {
  auto model = LoadedModel::load(run_dir);
  auto manifest = DatasetManifest::load(dataset + "/manifest.json");
  EvalOptions opts;
  opts.steps = steps;
  opts.guidance_scale = guidance;
  opts.seed = seed;
  auto report = evaluate_model(model, manifest, dataset, opts);
  report["config_hash"] = file_hash(run_dir + "/stage3.ckpt");
  write_json(out_path, report);
  std::cout << report.dump(1) << "\n";
  return 0;
}

int cmd_oracle(uint64_t seed, int64_t n_samples, const std::string& out_path) {
  json cert{{"seed", seed}, {"n_samples", n_samples}};

  int64_t holds = 0, strict = 0;
  for (int i = 0; i < 1000; ++i) {
    auto r = check_monotonicity(random_finite_distribution(substream_seed(seed, "mono-" +
                                                                          std::to_string(i))));
    if (r.holds) ++holds;
    if (r.strict) ++strict;
  }
  cert["monotonicity"] = {{"trials", 1000}, {"holds", holds}, {"strict", strict}};

  int violations = 0;
  double min_margin = 1e30;
  for (double s1 : {0.1, 0.5, 1.0, 2.0})
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      auto vb = gaussian_irreducible_variance(s1, t);
      if (vb.exact > vb.bound + 1e-12) ++violations;
      min_margin = std::min(min_margin, vb.bound - vb.exact);
    }
  cert["closed_form"] = {{"violations", violations}, {"min_margin", min_margin}};

  EndpointModel coupled{{0.0}, 0.3};
  std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  auto checks = monte_carlo_bound_check(coupled, grid, n_samples,
                                        substream_seed(seed, "mc"));
  json mc = json::array();
  bool all_passed = true;
  for (const auto& c : checks) {
    mc.push_back({{"t", c.t}, {"estimate", c.estimate}, {"std_error", c.std_error},
                  {"bound", c.bound}, {"passed", c.passed}});
    all_passed = all_passed && c.passed;
  }
  cert["monte_carlo"] = {{"checks", mc}, {"all_passed", all_passed}};
  cert["bound_loglog_slope"] = bound_loglog_slope(coupled, grid);

  write_json(out_path, cert);
  std::cout << cert.dump(1) << "\n";
  const bool ok = holds == 1000 && violations == 0 && all_passed;
  return ok ? 0 : 3;
}

int cmd_score_prompts(const std::string& in_path, const std::string& lexicon_path,
                      const std::string& llm_path, double alpha, int64_t top_k,
                      const std::string& out_path) {
  auto lexicon = lexicon_path.empty() ? DifficultyLexicon::standard()
                                      : DifficultyLexicon::load(lexicon_path);
  std::ifstream in(in_path);
  if (!in) throw ConfigError("cannot open " + in_path);

  json llm_scores = json::object();
  if (!llm_path.empty()) {
    std::ifstream f(llm_path);
    if (!f) throw ConfigError("cannot open " + llm_path);
    f >> llm_scores;
  }

  std::vector<ScoredPrompt> pool;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    auto scored = score_rule(j.at("caption").get<std::string>(), lexicon);
    if (j.contains("motion_id")) scored.motion_id = j["motion_id"].get<std::string>();
    if (llm_scores.contains(scored.caption) && llm_gate(scored.s_rule))
      scored.s_llm = llm_scores[scored.caption].get<double>();
    pool.push_back(std::move(scored));
  }

  auto selected = fuse_and_select(std::move(pool), alpha,
                                  static_cast<std::size_t>(top_k));
  json out = json::array();
  for (const auto& p : selected)
    out.push_back({{"caption", p.caption}, {"motion_id", p.motion_id},
                   {"s_rule", p.s_rule},
                   {"s_llm", p.s_llm ? json(*p.s_llm) : json(nullptr)},
                   {"s_final", p.s_final}, {"counts", p.counts},
                   {"llm_gate", llm_gate(p.s_rule)}});
  write_json(out_path, out);
  std::cout << "selected " << selected.size() << " prompts -> " << out_path << "\n";
  return 0;
}

int cmd_sweep(const std::string& run_dir, const std::string& dataset,
              const std::string& steps_csv, const std::string& cfg_csv, uint64_t seed,
              const std::string& out_path) {
  auto model = LoadedModel::load(run_dir);
  auto manifest = DatasetManifest::load(dataset + "/manifest.json");
  json table = json::array();
  for (int64_t L : parse_int_list(steps_csv)) {
    for (double s : parse_double_list(cfg_csv)) {
      EvalOptions opts;
      opts.steps = L;
      opts.guidance_scale = s;
      opts.seed = seed;
      auto report = evaluate_model(model, manifest, dataset, opts);
      table.push_back({{"steps", L}, {"cfg", s}, {"fid_desk", report["fid_desk"]},
                       {"r_at_3", report["r_at_3"]}, {"mpjpe", report["mpjpe"]}});
      std::cout << "L=" << L << " s=" << s << " fid=" << report["fid_desk"]
                << " r@3=" << report["r_at_3"] << "\n";
    }
  }
  write_json(out_path, table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FlowCoMotion: hybrid token-latent text-to-motion pipeline"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate-data", "Generate the synthetic desk dataset");
  std::string gen_out = "data";
  uint64_t gen_seed = 0;
  int train_pf = 63, test_pf = 7;
  gen->add_option("--out", gen_out);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--train-per-family", train_pf);
  gen->add_option("--test-per-family", test_pf);

  auto* train = app.add_subcommand("train", "Run one training stage");
  std::string train_config, train_dataset, train_out;
  int train_stage = 0, train_hybrid = -1;
  int64_t train_seed = -1, train_epochs = 0;
  bool train_resume = false;
  train->add_option("--config", train_config);
  train->add_option("--stage", train_stage)->check(CLI::Range(1, 3));
  train->add_option("--dataset", train_dataset);
  train->add_option("--out", train_out);
  train->add_option("--seed", train_seed);
  train->add_option("--epochs", train_epochs);
  train->add_option("--hybrid", train_hybrid)->check(CLI::Range(0, 1));
  train->add_flag("--resume", train_resume);

  auto* sample = app.add_subcommand("sample", "Sample a motion from a caption");
  std::string sample_run = "runs/default", sample_caption, sample_out = "sample.fcm";
  int64_t sample_steps = 40, sample_length = 80;
  double sample_cfg = 2.0;
  uint64_t sample_seed = 0;
  sample->add_option("--run", sample_run);
  sample->add_option("--caption", sample_caption)->required();
  sample->add_option("--steps", sample_steps)->check(CLI::PositiveNumber);
  sample->add_option("--cfg", sample_cfg);
  sample->add_option("--seed", sample_seed);
  sample->add_option("--length", sample_length);
  sample->add_option("--out", sample_out);

  auto* eval = app.add_subcommand("eval", "Evaluate a trained model");
  std::string eval_run = "runs/default", eval_dataset = "data",
              eval_out = "eval_report.json";
  int64_t eval_steps = 40;
  double eval_cfg = 2.0;
  uint64_t eval_seed = 0;
  eval->add_option("--run", eval_run);
  eval->add_option("--dataset", eval_dataset);
  eval->add_option("--steps", eval_steps);
  eval->add_option("--cfg", eval_cfg);
  eval->add_option("--seed", eval_seed);
  eval->add_option("--out", eval_out);

  auto* oracle = app.add_subcommand("oracle", "Run the numerical theory oracles");
  uint64_t oracle_seed = 0;
  int64_t oracle_samples = 100000;
  std::string oracle_out = "oracle_certificate.json";
  oracle->add_option("--seed", oracle_seed);
  oracle->add_option("--samples", oracle_samples);
  oracle->add_option("--out", oracle_out);

  auto* score = app.add_subcommand("score-prompts", "Score caption difficulty");
  std::string score_in, score_lexicon, score_llm, score_out = "scored_prompts.json";
  double score_alpha = 1.0;
  int64_t score_k = 10;
  score->add_option("--in", score_in)->required();
  score->add_option("--lexicon", score_lexicon);
  score->add_option("--llm-scores", score_llm);
  score->add_option("--alpha", score_alpha);
  score->add_option("--top-k", score_k);
  score->add_option("--out", score_out);

  auto* sweep = app.add_subcommand("sweep", "Metric grid over solver steps and CFG scale");
  std::string sweep_run = "runs/default", sweep_dataset = "data",
              sweep_steps = "10,40,100", sweep_cfg = "1,2,3",
              sweep_out = "sweep_table.json";
  uint64_t sweep_seed = 0;
  sweep->add_option("--run", sweep_run);
  sweep->add_option("--dataset", sweep_dataset);
  sweep->add_option("--steps", sweep_steps);
  sweep->add_option("--cfg", sweep_cfg);
  sweep->add_option("--seed", sweep_seed);
  sweep->add_option("--out", sweep_out);

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_generate_data(gen_out, gen_seed, train_pf, test_pf);
    if (train->parsed())
      return cmd_train(train_config, train_stage, train_dataset, train_out, train_seed,
                       train_epochs, train_hybrid, train_resume);
    if (sample->parsed())
      return cmd_sample(sample_run, sample_caption, sample_steps, sample_cfg,
                        sample_seed, sample_length, sample_out);
    if (eval->parsed())
      return cmd_eval(eval_run, eval_dataset, eval_steps, eval_cfg, eval_seed, eval_out);
    if (oracle->parsed()) return cmd_oracle(oracle_seed, oracle_samples, oracle_out);
    if (score->parsed())
      return cmd_score_prompts(score_in, score_lexicon, score_llm, score_alpha, score_k,
                               score_out);
    if (sweep->parsed())
      return cmd_sweep(sweep_run, sweep_dataset, sweep_steps, sweep_cfg, sweep_seed,
                       sweep_out);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // CLI11 prints usage; --help exits 0
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
