#include "fcm/pipeline.hpp"

#include <filesystem>

namespace fcm {

namespace fs = std::filesystem;
using json = nlohmann::json;

LoadedModel LoadedModel::load(const std::string& run_dir, int stage) {
  const auto vocab_path = run_dir + "/vocab.json";
  if (!fs::exists(vocab_path)) throw DependencyError("missing " + vocab_path);
  auto vocab = Vocabulary::load(vocab_path);

  const auto ckpt_path = run_dir + "/stage" + std::to_string(stage) + ".ckpt";
  if (!fs::exists(ckpt_path)) throw DependencyError("missing " + ckpt_path);
  auto ckpt = Checkpoint::load(ckpt_path);

  VaeConfig vae_cfg;
  FlowHeadConfig flow_cfg;
  flow_cfg.block_variant = ckpt.meta.value("block_variant", flow_cfg.block_variant);
  const bool hybrid = ckpt.meta.value("hybrid", true);
  const auto codebook_size = ckpt.at("codebook.entries").size(0);

  LoadedModel out{ModelSet::create(vae_cfg, flow_cfg, hybrid, vocab, 0, codebook_size),
                  {}, stage};
  out.models.load_from(ckpt);
  out.models.set_training(false);

  if (!ckpt.meta.contains("normalization"))
    throw CheckpointError("checkpoint lacks normalization metadata");
  auto mean = ckpt.meta["normalization"]["mean"].get<std::vector<double>>();
  auto stdv = ckpt.meta["normalization"]["std"].get<std::vector<double>>();
  out.norm.mean = torch::tensor(mean, torch::kFloat64).to(torch::kFloat32);
  out.norm.std = torch::tensor(stdv, torch::kFloat64).to(torch::kFloat32);
  return out;
}

torch::Tensor sample_latent(LoadedModel& model, const std::string& caption,
                            int64_t n_latent, const SamplerConfig& cfg, uint64_t seed) {
  auto& m = model.models;
  m.set_training(false);
  const int64_t d = m.vae_cfg.d_total;
  auto z0 = draw_prior(1, n_latent, d, substream_seed(seed, "prior"));
  auto mask = torch::ones({1, n_latent}, torch::kBool);

  auto cond_tokens = caption.empty() ? CaptionTokens::null_condition(1)
                                     : CaptionTokens::batch(m.vocab, {caption});
  auto null_tokens = CaptionTokens::null_condition(1, cond_tokens.ids.size(1));
  KvCache cond_cache, null_cache;

  VelocityField field = [&](const torch::Tensor& z, const torch::Tensor& t) {
    auto v_cond = m.flow_head->forward(z, m.condition->forward(cond_tokens, t), mask,
                                       &cond_cache);
    if (cfg.guidance_scale == 1.0 || caption.empty()) return v_cond;
    auto v_uncond = m.flow_head->forward(z, m.condition->forward(null_tokens, t), mask,
                                         &null_cache);
    return cfg_combine(v_uncond, v_cond, cfg.guidance_scale);
  };
  return euler_sample(field, z0, mask, cfg);
}

MotionSequence sample_motion(LoadedModel& model, const std::string& caption,
                             int64_t target_frames, const SamplerConfig& cfg,
                             uint64_t seed) {
  auto& m = model.models;
  const int64_t n = m.vae_cfg.latent_len(target_frames);
  auto z1 = sample_latent(model, caption, n, cfg, seed);
  torch::NoGradGuard guard;
  auto mask = torch::ones({1, n}, torch::kBool);
  auto frames_norm = m.decoder->forward(z1, mask, target_frames);
  auto frames = denormalize_frames(frames_norm.squeeze(0), model.norm);

  MotionSequence out;
  out.frames = frames.reshape({target_frames, m.vae_cfg.channels / 3, 3});
  out.caption = caption;
  out.valid_mask = torch::ones({target_frames}, torch::kBool);
  out.fps = 20.0;
  out.validate();
  return out;
}

MotionSequence reconstruct(LoadedModel& model, const MotionSequence& motion) {
  auto& m = model.models;
  m.set_training(false);
  torch::NoGradGuard guard;
  auto batch = make_batch({motion}, model.norm, m.vae_cfg.stride);
  auto gen = at::detail::createCPUGenerator(0);
  auto out = encode_couple(m, batch.frames, batch.frame_mask, gen, /*sample=*/false);
  auto recon_norm = m.decoder->forward(out.z1, batch.latent_mask, motion.length());
  MotionSequence recon;
  recon.frames = denormalize_frames(recon_norm.squeeze(0), model.norm)
                     .reshape({motion.length(), motion.joints(), 3});
  recon.caption = motion.caption;
  recon.fps = motion.fps;
  recon.valid_mask = motion.valid_mask.clone();
  recon.validate();
  return recon;
}

json evaluate_model(LoadedModel& model, const DatasetManifest& manifest,
                    const std::string& dataset_dir, const EvalOptions& opts) {
  SamplerConfig sampler{opts.steps, opts.guidance_scale};

  auto test_entries = manifest.split("test");
  auto train_entries = manifest.split("train");
  if (test_entries.empty() || train_entries.empty())
    throw ValidationError("dataset lacks train or test split");

  std::vector<LabeledFeature> gallery;
  std::vector<KinematicFeature> gt_features;
  for (const auto* e : train_entries) {
    auto motion = load_entry(manifest, *e, dataset_dir);
    gallery.push_back({KinematicFeature::compute(motion), e->family});
  }

  double mpjpe_sum = 0;
  std::vector<LabeledFeature> queries;
  std::vector<KinematicFeature> gen_features;
  uint64_t request = 0;
  for (const auto* e : test_entries) {
    auto motion = load_entry(manifest, *e, dataset_dir);
    auto recon = reconstruct(model, motion);
    mpjpe_sum += joint_position_error(recon.frames, motion.frames, motion.valid_mask);
    gt_features.push_back(KinematicFeature::compute(motion));
    for (int64_t g = 0; g < opts.gens_per_test_caption; ++g) {
      auto sampled = sample_motion(model, e->caption, e->length, sampler,
                                   substream_seed(opts.seed,
                                                  "eval-" + std::to_string(request++)));
      auto feat = KinematicFeature::compute(sampled);
      gen_features.push_back(feat);
      queries.push_back({feat, e->family});
    }
  }

  auto retrieval = retrieval_precision(queries, gallery,
                                       substream_seed(opts.seed, "retrieval"));
  double fid = frechet_distance(gen_features, gt_features);
  double div = diversity(gen_features, 200, substream_seed(opts.seed, "diversity"));

  // MultiModality: spread across repeated generations of one caption.
  double mm_sum = 0;
  int64_t mm_n = 0;
  for (int64_t c = 0; c < std::min<int64_t>(opts.mmodality_captions,
                                            static_cast<int64_t>(test_entries.size()));
       ++c) {
    const auto* e = test_entries[c];
    std::vector<KinematicFeature> repeats;
    for (int64_t r = 0; r < opts.mmodality_repeats; ++r)
      repeats.push_back(KinematicFeature::compute(sample_motion(
          model, e->caption, e->length, sampler,
          substream_seed(opts.seed, "mm-" + std::to_string(c) + "-" +
                                        std::to_string(r)))));
    mm_sum += diversity(repeats, 30, substream_seed(opts.seed, "mmdiv"));
    ++mm_n;
  }

  return json{{"mpjpe", mpjpe_sum / static_cast<double>(test_entries.size())},
              {"fid_desk", fid},
              {"r_at_1", retrieval.r_at_1},
              {"r_at_2", retrieval.r_at_2},
              {"r_at_3", retrieval.r_at_3},
              {"diversity", div},
              {"mmodality", mm_sum / std::max<int64_t>(1, mm_n)},
              {"steps", opts.steps},
              {"guidance_scale", opts.guidance_scale},
              {"seed", opts.seed}};
}

}  // namespace fcm
