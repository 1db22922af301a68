#include "fcm/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fcm/flow_process.hpp"

namespace fcm {

namespace fs = std::filesystem;
using json = nlohmann::json;

void TrainConfig::validate() const {
  if (stage < 1 || stage > 3) throw ConfigError("stage must be 1, 2, or 3");
  if (dataset_dir.empty()) throw ConfigError("dataset_dir is required");
  if (out_dir.empty()) throw ConfigError("out_dir is required");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (lr <= 0) throw ConfigError("lr must be positive");
  for (double l : {lambda_rec, lambda_commit, lambda_dis_peak, lambda_vel, lambda_acc,
                   lambda_jerk, lambda_global, kl_weight})
    if (l < 0) throw ConfigError("loss weights must be >= 0");
  if (cfg_drop < 0 || cfg_drop > 1) throw ConfigError("cfg_drop must be in [0,1]");
  if (codebook_size < 2) throw ConfigError("codebook_size must be >= 2");
  if (block_variant != "nova" && block_variant != "orbit")
    throw ConfigError("block_variant must be nova or orbit");
}

double TrainConfig::fk_weight() const {
  if (lambda_fk >= 0) return lambda_fk;
  return stage == 1 ? 0.5 : 0.1;
}

int64_t TrainConfig::stage_epochs() const {
  if (epochs > 0) return epochs;
  switch (stage) {
    case 1: return 50;
    case 2: return 20;
    default: return 200;
  }
}

TrainConfig TrainConfig::from_toml(const TomlTable& t) {
  TrainConfig c;
  c.stage = static_cast<int>(t.get_int("run.stage", c.stage));
  c.dataset_dir = t.get_string("run.dataset_dir", "");
  c.out_dir = t.get_string("run.out_dir", "");
  c.epochs = t.get_int("run.epochs", c.epochs);
  c.batch_size = t.get_int("run.batch_size", c.batch_size);
  c.lr = t.get_double("run.lr", c.lr);
  c.grad_clip = t.get_double("run.grad_clip", c.grad_clip);
  c.seed = static_cast<std::uint64_t>(t.get_int("run.seed", 0));
  c.hybrid = t.get_bool("run.hybrid", c.hybrid);
  c.resume = t.get_bool("run.resume", c.resume);
  c.lambda_rec = t.get_double("loss.rec", c.lambda_rec);
  c.lambda_commit = t.get_double("loss.commit", c.lambda_commit);
  c.lambda_fk = t.get_double("loss.fk", c.lambda_fk);
  c.lambda_dis_peak = t.get_double("loss.dis_peak", c.lambda_dis_peak);
  c.lambda_vel = t.get_double("loss.vel", c.lambda_vel);
  c.lambda_acc = t.get_double("loss.acc", c.lambda_acc);
  c.lambda_jerk = t.get_double("loss.jerk", c.lambda_jerk);
  c.lambda_global = t.get_double("loss.global", c.lambda_global);
  c.kl_weight = t.get_double("loss.kl", c.kl_weight);
  c.cfg_drop = t.get_double("loss.cfg_drop", c.cfg_drop);
  c.codebook_size = t.get_int("model.codebook_size", c.codebook_size);
  c.block_variant = t.get_string("model.block_variant", c.block_variant);
  c.validate();
  return c;
}

double distillation_weight_schedule(double progress, double peak) {
  if (progress < 0 || progress > 1) throw ValidationError("progress must be in [0,1]");
  if (progress < 0.2) return peak * progress / 0.2;
  if (progress <= 0.8) return peak;
  return peak * (1.0 - progress) / 0.2;
}

// ---------------------------------------------------------------------------
// ModelSet

ModelSet ModelSet::create(const VaeConfig& vae_cfg, const FlowHeadConfig& flow_cfg,
                          bool hybrid, const Vocabulary& vocab, std::uint64_t init_seed,
                          int64_t codebook_size) {
  torch::manual_seed(static_cast<int64_t>(init_seed & 0x7fffffffffffffffull));
  ModelSet m;
  m.vae_cfg = vae_cfg;
  m.flow_cfg = flow_cfg;
  m.hybrid = hybrid;
  m.vocab = vocab;
  m.encoder = MotionEncoder(vae_cfg);
  m.decoder = MotionDecoder(vae_cfg);
  m.coupling = CouplingNetwork(vae_cfg.d_total);
  m.student_head = ProjectionHead(vae_cfg.d_continuous());
  m.codebook = Codebook::create(codebook_size, vae_cfg.d_token());
  m.distill = DistillationState::create(m.encoder, m.student_head, vae_cfg);
  m.condition = ConditionBuilder(static_cast<int64_t>(vocab.token_to_id.size()), flow_cfg);
  m.flow_head = FlowHead(flow_cfg);
  return m;
}

Checkpoint ModelSet::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.put_module("encoder", *encoder);
  ckpt.put_module("decoder", *decoder);
  ckpt.put_module("coupling", *coupling);
  ckpt.put_module("student_head", *student_head);
  ckpt.put_module("teacher_encoder", *distill.teacher_encoder);
  ckpt.put_module("teacher_head", *distill.teacher_head);
  ckpt.put_module("condition", *condition);
  ckpt.put_module("flow_head", *flow_head);
  ckpt.tensors["distill.center"] = distill.center.clone();
  ckpt.tensors["codebook.entries"] = codebook.entries.clone();
  ckpt.tensors["codebook.usage_count"] = codebook.usage_count.clone();
  ckpt.tensors["codebook.ema_cluster_size"] = codebook.ema_cluster_size.clone();
  ckpt.tensors["codebook.ema_embed_sum"] = codebook.ema_embed_sum.clone();
  ckpt.meta["hybrid"] = hybrid;
  ckpt.meta["block_variant"] = flow_cfg.block_variant;
  ckpt.meta["d_total"] = vae_cfg.d_total;
  return ckpt;
}

void ModelSet::load_from(const Checkpoint& ckpt) {
  ckpt.load_module("encoder", *encoder);
  ckpt.load_module("decoder", *decoder);
  ckpt.load_module("coupling", *coupling);
  ckpt.load_module("student_head", *student_head);
  ckpt.load_module("teacher_encoder", *distill.teacher_encoder);
  ckpt.load_module("teacher_head", *distill.teacher_head);
  ckpt.load_module("condition", *condition);
  ckpt.load_module("flow_head", *flow_head);
  torch::NoGradGuard g;
  distill.center.copy_(ckpt.at("distill.center"));
  codebook.entries.copy_(ckpt.at("codebook.entries"));
  codebook.usage_count.copy_(ckpt.at("codebook.usage_count"));
  codebook.ema_cluster_size.copy_(ckpt.at("codebook.ema_cluster_size"));
  codebook.ema_embed_sum.copy_(ckpt.at("codebook.ema_embed_sum"));
  if (ckpt.meta.contains("hybrid")) hybrid = ckpt.meta["hybrid"].get<bool>();
}

void ModelSet::set_training(bool on) {
  encoder->train(on);
  decoder->train(on);
  coupling->train(on);
  student_head->train(on);
  condition->train(on);
  flow_head->train(on);
  distill.teacher_encoder->train(false);
  distill.teacher_head->train(false);
}

// ---------------------------------------------------------------------------
// Batching and the shared latent pipeline

Batch make_batch(const std::vector<MotionSequence>& motions, const Normalization& norm,
                 int64_t stride) {
  if (motions.empty()) throw ValidationError("empty batch");
  int64_t max_t = 0;
  for (const auto& m : motions) max_t = std::max(max_t, m.length());
  const int64_t C = motions.front().joints() * 3;
  const auto B = static_cast<int64_t>(motions.size());
  Batch batch;
  batch.frames = torch::zeros({B, max_t, C});
  batch.frame_mask = torch::zeros({B, max_t}, torch::kBool);
  for (int64_t b = 0; b < B; ++b) {
    const auto& m = motions[b];
    auto flat = normalize_frames(m.frames.reshape({m.length(), C}), norm);
    batch.frames[b].narrow(0, 0, m.length()).copy_(flat);
    batch.frame_mask[b].narrow(0, 0, m.length()).copy_(m.valid_mask);
    batch.captions.push_back(m.caption);
  }
  batch.latent_mask = latent_mask_from_frames(batch.frame_mask, stride);
  return batch;
}

LatentOutputs encode_couple(ModelSet& models, const torch::Tensor& frames,
                            const torch::Tensor& frame_mask, torch::Generator& gen,
                            bool sample) {
  LatentOutputs out;
  out.params = models.encoder->forward(frames, frame_mask);
  torch::Tensor merged;
  if (models.hybrid) {
    auto split = split_latent(out.params.mu);
    auto schedule = ScaleSchedule::for_length(split.token_part.size(1));
    out.quant = quantize_multiscale(split.token_part, schedule, models.codebook,
                                    out.params.mask);
    const auto d_q = models.vae_cfg.d_token();
    GaussianLatentParams cont{out.params.mu.narrow(-1, d_q, models.vae_cfg.d_continuous()),
                              out.params.log_var.narrow(-1, d_q,
                                                        models.vae_cfg.d_continuous()),
                              out.params.mask};
    auto z_c = sample ? reparameterize(cont, gen) : cont.mu;
    merged = merge_latent({out.quant->z_q_st, z_c});
  } else {
    merged = sample ? reparameterize(out.params, gen) : out.params.mu;
  }
  out.z1 = models.coupling->forward_merged(merged);
  return out;
}

// ---------------------------------------------------------------------------
// Kinematic losses

namespace {

torch::Tensor masked_mse(const torch::Tensor& a, const torch::Tensor& b,
                         const torch::Tensor& mask) {
  auto m = mask.to(a.dtype());
  while (m.dim() < a.dim()) m = m.unsqueeze(-1);
  auto denom = (m.sum() * (a.numel() / mask.numel())).clamp_min(1.0);
  return ((a - b).square() * m).sum() / denom;
}

// k-th forward difference along dim 1, with a mask valid only where all k+1
// frames of the stencil are valid.
std::pair<torch::Tensor, torch::Tensor> masked_diff(const torch::Tensor& x,
                                                    const torch::Tensor& mask, int k) {
  auto d = x;
  auto m = mask;
  for (int i = 0; i < k; ++i) {
    const int64_t T = d.size(1);
    d = d.narrow(1, 1, T - 1) - d.narrow(1, 0, T - 1);
    m = m.narrow(1, 1, T - 1) & m.narrow(1, 0, T - 1);
  }
  return {d, m};
}

torch::Tensor kl_on(const GaussianLatentParams& p) { return kl_divergence(p); }

}  // namespace

KinematicLossReport kinematic_losses(const torch::Tensor& pred_norm,
                                     const torch::Tensor& target_norm,
                                     const torch::Tensor& frame_mask,
                                     const Normalization& norm, const Skeleton& skeleton) {
  if (pred_norm.sizes() != target_norm.sizes())
    throw ShapeError("prediction/target shape mismatch");
  KinematicLossReport r;
  r.rec = masked_mse(pred_norm, target_norm, frame_mask);

  auto pred = denormalize_frames(pred_norm, norm);
  auto target = denormalize_frames(target_norm, norm);
  for (int k = 1; k <= 3; ++k) {
    auto [dp, m] = masked_diff(pred, frame_mask, k);
    auto [dt, m2] = masked_diff(target, frame_mask, k);
    auto& slot = k == 1 ? r.vel : (k == 2 ? r.acc : r.jerk);
    slot = masked_mse(dp, dt, m);
  }
  r.global = masked_mse(pred.narrow(-1, 0, 3), target.narrow(-1, 0, 3), frame_mask);

  // Bone-length consistency of the prediction against the rest skeleton.
  const auto J = static_cast<int64_t>(skeleton.joints());
  if (pred.size(-1) != J * 3) throw ShapeError("skeleton/channel mismatch");
  auto pts = pred.reshape({pred.size(0), pred.size(1), J, 3});
  auto m = frame_mask.to(pred.dtype());
  torch::Tensor fk_sum = torch::zeros({}, pred.options());
  for (int64_t j = 1; j < J; ++j) {
    const auto p = skeleton.parent_index[j];
    const auto& off = skeleton.bone_offset[j];
    const double rest =
        std::sqrt(off[0] * off[0] + off[1] * off[1] + off[2] * off[2]);
    auto len = (pts.select(2, j) - pts.select(2, p)).norm(2, -1);  // B x T
    fk_sum = fk_sum + ((len - rest).square() * m).sum();
  }
  r.fk = fk_sum / (m.sum().clamp_min(1.0) * static_cast<double>(J - 1));
  return r;
}

// ---------------------------------------------------------------------------
// Stage losses

StepLosses stage1_losses(ModelSet& models, const Batch& batch, const TrainConfig& cfg,
                         double dis_weight, torch::Generator& gen, std::mt19937_64& rng,
                         const Normalization& norm) {
  auto out = encode_couple(models, batch.frames, batch.frame_mask, gen, true);
  auto recon = models.decoder->forward(out.z1, batch.latent_mask, batch.frames.size(1));

  const auto d_q = models.vae_cfg.d_token();
  GaussianLatentParams kl_part = out.params;
  if (models.hybrid) {
    kl_part.mu = out.params.mu.narrow(-1, d_q, models.vae_cfg.d_continuous());
    kl_part.log_var = out.params.log_var.narrow(-1, d_q, models.vae_cfg.d_continuous());
  }
  auto kin = kinematic_losses(recon, batch.frames, batch.frame_mask, norm,
                              Skeleton::desk());
  auto kl = kl_on(kl_part);
  auto rec = kin.rec + cfg.kl_weight * kl;
  auto commit = models.hybrid ? out.quant->commit_loss
                              : torch::zeros({}, batch.frames.options());

  // DINO-style multi-view distillation on the continuous branch.
  torch::Tensor dis = torch::zeros({}, batch.frames.options());
  if (dis_weight > 0.0) {
    ViewConfig vcfg;
    const auto B = batch.frames.size(0);
    std::vector<ViewSet> views;
    views.reserve(B);
    for (int64_t b = 0; b < B; ++b)
      views.push_back(make_views(batch.frames[b], batch.frame_mask[b], vcfg, rng));
    const int n_views = vcfg.n_global + vcfg.n_local;
    auto batched_slot = [&](int v) {
      int64_t max_t = 0;
      for (const auto& vs : views) max_t = std::max(max_t, vs.all()[v]->frames.size(0));
      auto f = torch::zeros({B, max_t, batch.frames.size(2)});
      auto m = torch::zeros({B, max_t}, torch::kBool);
      for (int64_t b = 0; b < B; ++b) {
        const auto* view = views[b].all()[v];
        f[b].narrow(0, 0, view->frames.size(0)).copy_(view->frames);
        m[b].narrow(0, 0, view->mask.size(0)).copy_(view->mask);
      }
      return std::make_pair(f, m);
    };
    std::vector<torch::Tensor> student_logits, teacher_logits;
    for (int v = 0; v < n_views; ++v) {
      auto [f, m] = batched_slot(v);
      student_logits.push_back(
          view_logits(models.encoder, models.student_head, f, m, models.vae_cfg));
      if (v < vcfg.n_global) {
        torch::NoGradGuard g;
        teacher_logits.push_back(view_logits(models.distill.teacher_encoder,
                                             models.distill.teacher_head, f, m,
                                             models.vae_cfg));
      }
    }
    auto t_logits = torch::stack(teacher_logits);  // G x B x K
    auto teacher = teacher_distribution(models.distill, t_logits);
    auto student = student_distribution(models.distill, torch::stack(student_logits));
    dis = distillation_loss(teacher, student);
    if (models.encoder->is_training())
      update_center(models.distill, t_logits.reshape({-1, t_logits.size(-1)}));
  }

  if (models.hybrid && models.encoder->is_training())
    update_codebook(models.codebook, *out.quant);

  StepLosses losses;
  losses.total = cfg.lambda_rec * rec + dis_weight * dis + cfg.lambda_commit * commit +
                 cfg.fk_weight() * kin.fk;
  losses.components = {{"rec", kin.rec.item<double>()},
                       {"kl", kl.item<double>()},
                       {"dis", dis.item<double>()},
                       {"commit", commit.item<double>()},
                       {"fk", kin.fk.item<double>()},
                       {"total", losses.total.item<double>()}};
  return losses;
}

StepLosses stage2_losses(ModelSet& models, const Batch& batch, const TrainConfig& cfg,
                         torch::Generator& gen, const Normalization& norm) {
  torch::Tensor z1;
  {
    torch::NoGradGuard g;
    z1 = encode_couple(models, batch.frames, batch.frame_mask, gen, true).z1;
  }
  auto recon = models.decoder->forward(z1, batch.latent_mask, batch.frames.size(1));
  auto kin = kinematic_losses(recon, batch.frames, batch.frame_mask, norm,
                              Skeleton::desk());
  StepLosses losses;
  losses.total = cfg.lambda_rec * kin.rec + cfg.lambda_vel * kin.vel +
                 cfg.lambda_acc * kin.acc + cfg.lambda_jerk * kin.jerk +
                 cfg.lambda_global * kin.global + cfg.fk_weight() * kin.fk;
  losses.components = {{"rec", kin.rec.item<double>()}, {"vel", kin.vel.item<double>()},
                       {"acc", kin.acc.item<double>()}, {"jerk", kin.jerk.item<double>()},
                       {"global", kin.global.item<double>()},
                       {"fk", kin.fk.item<double>()},
                       {"total", losses.total.item<double>()}};
  return losses;
}

StepLosses stage3_losses(ModelSet& models, const Batch& batch, const TrainConfig& cfg,
                         torch::Generator& gen, std::mt19937_64& rng) {
  torch::Tensor z1;
  {
    torch::NoGradGuard g;
    z1 = encode_couple(models, batch.frames, batch.frame_mask, gen, true).z1;
  }
  const auto B = z1.size(0);
  auto t = torch::rand({B}, gen, torch::kFloat32);
  auto z0 = torch::randn(z1.sizes(), gen, z1.options());
  auto z_t = interpolate_path(z0, z1, t);
  auto u = velocity_target(z0, z1);

  auto tokens = CaptionTokens::batch(models.vocab, batch.captions);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int64_t b = 0; b < B; ++b)
    if (unif(rng) < cfg.cfg_drop) tokens.mask[b].fill_(false);

  auto cond = models.condition->forward(tokens, t);
  auto v_hat = models.flow_head->forward(z_t, cond, batch.latent_mask);
  StepLosses losses;
  losses.total = flow_matching_loss(v_hat, u, batch.latent_mask);
  losses.components = {{"fm", losses.total.item<double>()},
                       {"total", losses.total.item<double>()}};
  return losses;
}

// ---------------------------------------------------------------------------
// Full stage runs

namespace {

std::vector<torch::Tensor> trainable_params(ModelSet& models, int stage) {
  std::vector<std::shared_ptr<torch::nn::Module>> modules;
  switch (stage) {
    case 1:
      modules = {models.encoder.ptr(), models.decoder.ptr(), models.coupling.ptr(),
                 models.student_head.ptr()};
      break;
    case 2:
      modules = {models.decoder.ptr()};
      break;
    default:
      modules = {models.condition.ptr(), models.flow_head.ptr()};
      break;
  }
  std::vector<torch::Tensor> params;
  for (auto& m : modules)
    for (auto& p : m->parameters()) params.push_back(p);
  return params;
}

void set_stage_freezing(ModelSet& models, int stage) {
  auto freeze = [](torch::nn::Module& m, bool frozen) {
    for (auto& p : m.parameters()) p.set_requires_grad(!frozen);
  };
  freeze(*models.encoder, stage != 1);
  freeze(*models.decoder, stage == 3);
  freeze(*models.coupling, stage != 1);
  freeze(*models.student_head, stage != 1);
  freeze(*models.condition, stage != 3);
  freeze(*models.flow_head, stage != 3);
  freeze(*models.distill.teacher_encoder, true);
  freeze(*models.distill.teacher_head, true);
}

void assert_freeze_contract(ModelSet& models, int stage) {
  auto check = [](const torch::nn::Module& m, const char* name) {
    for (const auto& p : m.parameters()) {
      if (p.requires_grad()) throw ValidationError(std::string("frozen module has trainable parameter: ") + name);
      if (p.grad().defined() && p.grad().abs().max().item<double>() > 0)
        throw ValidationError(std::string("frozen module received gradient: ") + name);
    }
  };
  if (stage != 1) {
    check(*models.encoder, "encoder");
    check(*models.coupling, "coupling");
    check(*models.student_head, "student_head");
  }
  if (stage == 3) check(*models.decoder, "decoder");
  if (stage != 3) {
    check(*models.condition, "condition");
    check(*models.flow_head, "flow_head");
  }
  check(*models.distill.teacher_encoder, "teacher_encoder");
  check(*models.distill.teacher_head, "teacher_head");
}

std::string stage_path(const std::string& out_dir, int stage) {
  return out_dir + "/stage" + std::to_string(stage) + ".ckpt";
}

}  // namespace

std::string run_stage(const TrainConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  auto manifest = DatasetManifest::load(cfg.dataset_dir + "/manifest.json");

  std::vector<std::string> all_captions;
  for (const auto& e : manifest.entries) all_captions.push_back(e.caption);
  auto vocab = Vocabulary::build(all_captions);
  vocab.save(cfg.out_dir + "/vocab.json");

  std::vector<MotionSequence> train;
  for (const auto* e : manifest.split("train"))
    train.push_back(load_entry(manifest, *e, cfg.dataset_dir));
  if (train.empty()) throw ValidationError("empty training split");

  VaeConfig vae_cfg;
  FlowHeadConfig flow_cfg;
  flow_cfg.block_variant = cfg.block_variant;
  auto models = ModelSet::create(vae_cfg, flow_cfg, cfg.hybrid, vocab,
                                 substream_seed(cfg.seed, "init"), cfg.codebook_size);

  const std::string ckpt_path = stage_path(cfg.out_dir, cfg.stage);
  int64_t start_epoch = 0;
  bool resumed = false;
  if (cfg.resume && fs::exists(ckpt_path)) {
    auto ckpt = Checkpoint::load(ckpt_path);
    models.load_from(ckpt);
    start_epoch = ckpt.meta.at("epoch").get<int64_t>() + 1;
    resumed = true;
  } else if (cfg.stage > 1) {
    const auto prev = stage_path(cfg.out_dir, cfg.stage - 1);
    if (!fs::exists(prev))
      throw DependencyError("stage " + std::to_string(cfg.stage) +
                            " requires checkpoint " + prev);
    models.load_from(Checkpoint::load(prev));
  }

  set_stage_freezing(models, cfg.stage);
  models.set_training(true);
  auto params = trainable_params(models, cfg.stage);
  torch::optim::Adam optimizer(params, torch::optim::AdamOptions(cfg.lr));
  if (resumed && fs::exists(ckpt_path + ".opt"))
    torch::load(optimizer, ckpt_path + ".opt");

  const int64_t epochs = cfg.stage_epochs();
  const auto n_train = static_cast<int64_t>(train.size());
  const int64_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = epochs * steps_per_epoch;

  // Initialize the codebook from real token statistics on a fresh stage 1.
  if (cfg.stage == 1 && models.hybrid && !resumed) {
    torch::NoGradGuard g;
    std::vector<MotionSequence> first(train.begin(),
                                      train.begin() + std::min<int64_t>(cfg.batch_size,
                                                                        n_train));
    auto batch = make_batch(first, manifest.normalization, vae_cfg.stride);
    auto p = models.encoder->forward(batch.frames, batch.frame_mask);
    auto rng = make_rng(cfg.seed, "codebook-init");
    models.codebook.init_from_features(
        split_latent(p.mu).token_part.reshape({-1, vae_cfg.d_token()}), rng);
  }

  std::ofstream metrics(cfg.out_dir + "/stage" + std::to_string(cfg.stage) +
                            "_metrics.jsonl",
                        resumed ? std::ios::app : std::ios::trunc);
  std::string last_good = cfg.stage > 1 ? stage_path(cfg.out_dir, cfg.stage - 1) : "none";

  for (int64_t epoch = start_epoch; epoch < epochs; ++epoch) {
    if (cfg.stop_after > 0 && epoch >= cfg.stop_after) break;
    const auto tag = "stage" + std::to_string(cfg.stage) + "-epoch" +
                     std::to_string(epoch);
    const auto epoch_seed = substream_seed(cfg.seed, tag);
    torch::manual_seed(static_cast<int64_t>(epoch_seed & 0x7fffffffffffffffull));
    auto rng = std::mt19937_64(epoch_seed);
    auto gen = at::detail::createCPUGenerator(substream_seed(epoch_seed, "latent"));

    const double lr_now =
        cfg.lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / epochs));
    for (auto& group : optimizer.param_groups())
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr_now);

    std::vector<int64_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::map<std::string, double> epoch_sums;
    int64_t n_batches = 0;
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<MotionSequence> chunk;
      for (int64_t i = s * cfg.batch_size;
           i < std::min(n_train, (s + 1) * cfg.batch_size); ++i)
        chunk.push_back(train[order[i]]);
      if (chunk.empty()) continue;
      auto batch = make_batch(chunk, manifest.normalization, vae_cfg.stride);

      StepLosses losses;
      if (cfg.stage == 1) {
        const double progress =
            static_cast<double>(epoch * steps_per_epoch + s) / total_steps;
        losses = stage1_losses(models, batch, cfg,
                               distillation_weight_schedule(progress,
                                                            cfg.lambda_dis_peak),
                               gen, rng, manifest.normalization);
      } else if (cfg.stage == 2) {
        losses = stage2_losses(models, batch, cfg, gen, manifest.normalization);
      } else {
        losses = stage3_losses(models, batch, cfg, gen, rng);
      }
      if (!losses.total.isfinite().item<bool>())
        throw DivergenceError("NaN/Inf loss at " + tag + " step " + std::to_string(s) +
                              "; last good checkpoint: " + last_good);

      optimizer.zero_grad();
      losses.total.backward();
      assert_freeze_contract(models, cfg.stage);
      torch::nn::utils::clip_grad_norm_(params, cfg.grad_clip);
      optimizer.step();
      if (cfg.stage == 1) update_teacher(models.distill, models.encoder,
                                         models.student_head);

      for (const auto& [k, v] : losses.components) epoch_sums[k] += v;
      ++n_batches;
    }

    if (cfg.stage == 1 && models.hybrid) {
      torch::NoGradGuard g;
      std::vector<MotionSequence> pool_src;
      for (int64_t i = 0; i < std::min<int64_t>(cfg.batch_size, n_train); ++i)
        pool_src.push_back(train[order[i]]);
      auto batch = make_batch(pool_src, manifest.normalization, vae_cfg.stride);
      auto p = models.encoder->forward(batch.frames, batch.frame_mask);
      auto reseeded = reseed_dead_entries(
          models.codebook, split_latent(p.mu).token_part.reshape({-1, vae_cfg.d_token()}),
          rng);
      epoch_sums["reseeded"] = static_cast<double>(reseeded);
      models.codebook.usage_count.zero_();
    }

    json record{{"stage", cfg.stage}, {"epoch", epoch}, {"lr", lr_now},
                {"batches", n_batches}};
    for (const auto& [k, v] : epoch_sums)
      record[k] = k == "reseeded" ? v : v / std::max<int64_t>(1, n_batches);
    record["time"] = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    metrics << record.dump() << "\n";
    metrics.flush();

    auto ckpt = models.to_checkpoint();
    ckpt.meta["stage"] = cfg.stage;
    ckpt.meta["epoch"] = epoch;
    ckpt.meta["seed"] = cfg.seed;
    {
      auto mean = manifest.normalization.mean.to(torch::kFloat64);
      auto stdv = manifest.normalization.std.to(torch::kFloat64);
      ckpt.meta["normalization"] = {
          {"mean", std::vector<double>(mean.data_ptr<double>(),
                                       mean.data_ptr<double>() + mean.numel())},
          {"std", std::vector<double>(stdv.data_ptr<double>(),
                                      stdv.data_ptr<double>() + stdv.numel())}};
    }
    ckpt.save(ckpt_path);
    torch::save(optimizer, ckpt_path + ".opt");
    last_good = ckpt_path;
  }
  return ckpt_path;
}

double evaluate_fm_loss(ModelSet& models, const std::vector<Batch>& batches,
                        std::uint64_t seed) {
  torch::NoGradGuard guard;
  models.set_training(false);
  auto gen = at::detail::createCPUGenerator(seed);
  double sum = 0;
  int64_t n = 0;
  for (const auto& batch : batches) {
    auto z1 = encode_couple(models, batch.frames, batch.frame_mask, gen, true).z1;
    auto t = torch::rand({z1.size(0)}, gen, torch::kFloat32);
    auto z0 = torch::randn(z1.sizes(), gen, z1.options());
    auto tokens = CaptionTokens::batch(models.vocab, batch.captions);
    auto cond = models.condition->forward(tokens, t);
    auto v_hat = models.flow_head->forward(interpolate_path(z0, z1, t), cond,
                                           batch.latent_mask);
    sum += flow_matching_loss(v_hat, velocity_target(z0, z1),
                              batch.latent_mask).item<double>();
    ++n;
  }
  models.set_training(true);
  return sum / std::max<int64_t>(1, n);
}

}  // namespace fcm
