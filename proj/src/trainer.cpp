#include "hgs/trainer.hpp"

#include "hgs/binary_io.hpp"
#include "hgs/cloud_io.hpp"
#include "hgs/error.hpp"
#include "hgs/loss_metrics.hpp"
#include "hgs/renderer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace hgs {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) { return splitmix(seed ^ splitmix(salt)); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_cloud_exact(std::ostream& out, const GaussianCloud& c) {
  bin::put_u64(out, c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    bin::put_vec(out, c.means[i]);
    bin::put_vec(out, c.log_scales[i]);
    bin::put_vec(out, c.rotations[i]);
    bin::put_f64(out, c.raw_opacities[i]);
    bin::put_vec(out, c.colors[i]);
  }
}

GaussianCloud read_cloud_exact(std::istream& in) {
  const std::uint64_t n = bin::get_u64(in);
  if (n > (1ull << 32)) throw Error(ErrorKind::Format, "cloud size is implausible");
  GaussianCloud c;
  c.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const Vec3 m = bin::get_vec<3>(in);
    const Vec3 s = bin::get_vec<3>(in);
    const Quat q = bin::get_vec<4>(in);
    const double o = bin::get_f64(in);
    const Vec3 col = bin::get_vec<3>(in);
    c.push_back(m, s, q, o, col);
  }
  return c;
}

void dump_divergence(const std::filesystem::path& dir, const GaussianCloud& cloud,
                     const Camera& camera, const Image& render, int iteration, const std::string& what) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  save_cloud(dir / "diverged.hgscloud", cloud);
  Image safe = render;
  for (double& v : safe.data()) {
    if (!std::isfinite(v)) v = 1.0;
  }
  write_png(dir / ("diverged_view" + std::to_string(camera.view_id) + ".png"), safe);
  nlohmann::json info = {{"iteration", iteration}, {"view_id", camera.view_id},
                         {"n_gaussians", cloud.size()}, {"reason", what}};
  std::ofstream(dir / "diverged.json") << info.dump(2) << "\n";
}

}  // namespace

void TrainConfig::validate() const {
  if (total_iters < 1) throw Error(ErrorKind::InvalidSpec, "total_iters must be >= 1");
  for (double lr : {lr_means, lr_means_final, lr_scales, lr_rotations, lr_opacities, lr_colors}) {
    if (!(lr > 0.0)) throw Error(ErrorKind::InvalidSpec, "learning rates must be positive");
  }
  if (eval_every < 1) throw Error(ErrorKind::InvalidSpec, "eval_every must be >= 1");
  if (checkpoint_every < 0) throw Error(ErrorKind::InvalidSpec, "checkpoint_every must be >= 0");
  if (lambda_ssim < 0.0 || lambda_ssim > 1.0) throw Error(ErrorKind::InvalidSpec, "lambda_ssim must lie in [0,1]");
  policy_config.validate();
}

nlohmann::json TrainConfig::to_json() const {
  const PolicyConfig& p = policy_config;
  return {
      {"total_iters", total_iters},
      {"lr_means", lr_means},
      {"lr_means_final", lr_means_final},
      {"lr_scales", lr_scales},
      {"lr_rotations", lr_rotations},
      {"lr_opacities", lr_opacities},
      {"lr_colors", lr_colors},
      {"scale_means_lr_by_extent", scale_means_lr_by_extent},
      {"lambda_ssim", lambda_ssim},
      {"eval_every", eval_every},
      {"checkpoint_every", checkpoint_every},
      {"seed", seed},
      {"adam", {{"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-15}}},
      {"policy",
       {{"name", to_string(p.policy)},
        {"tau_grad", p.tau_grad},
        {"grad_unit_scale", p.grad_unit_scale},
        {"interval", p.interval},
        {"k", p.k},
        {"lambda", p.lambda},
        {"tau_large", p.tau_large},
        {"tau_ssim", p.tau_ssim},
        {"densify_start", p.densify_start},
        {"densify_end", p.densify_end},
        {"percent_dense", p.percent_dense},
        {"prune_opacity", p.prune_opacity},
        {"prune_scale_fraction", p.prune_scale_fraction},
        {"opacity_reset", p.opacity_reset},
        {"opacity_reset_every", p.opacity_reset_every}}},
  };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.total_iters = j.value("total_iters", c.total_iters);
  c.lr_means = j.value("lr_means", c.lr_means);
  c.lr_means_final = j.value("lr_means_final", c.lr_means_final);
  c.lr_scales = j.value("lr_scales", c.lr_scales);
  c.lr_rotations = j.value("lr_rotations", c.lr_rotations);
  c.lr_opacities = j.value("lr_opacities", c.lr_opacities);
  c.lr_colors = j.value("lr_colors", c.lr_colors);
  c.scale_means_lr_by_extent = j.value("scale_means_lr_by_extent", c.scale_means_lr_by_extent);
  c.lambda_ssim = j.value("lambda_ssim", c.lambda_ssim);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.seed = j.value("seed", c.seed);
  if (j.contains("policy")) {
    const auto& pj = j.at("policy");
    PolicyConfig& p = c.policy_config;
    p.policy = parse_policy(pj.value("name", std::string(to_string(p.policy))));
    p.tau_grad = pj.value("tau_grad", p.tau_grad);
    p.grad_unit_scale = pj.value("grad_unit_scale", p.grad_unit_scale);
    p.interval = pj.value("interval", p.interval);
    p.k = pj.value("k", p.k);
    p.lambda = pj.value("lambda", p.lambda);
    p.tau_large = pj.value("tau_large", p.tau_large);
    p.tau_ssim = pj.value("tau_ssim", p.tau_ssim);
    p.densify_start = pj.value("densify_start", p.densify_start);
    p.densify_end = pj.value("densify_end", p.densify_end);
    p.percent_dense = pj.value("percent_dense", p.percent_dense);
    p.prune_opacity = pj.value("prune_opacity", p.prune_opacity);
    p.prune_scale_fraction = pj.value("prune_scale_fraction", p.prune_scale_fraction);
    p.opacity_reset = pj.value("opacity_reset", p.opacity_reset);
    p.opacity_reset_every = pj.value("opacity_reset_every", p.opacity_reset_every);
  }
  return c;
}

std::uint64_t TrainConfig::hash() const { return fnv1a(to_json().dump()); }

TrainState initial_state(const GaussianCloud& init, const TrainConfig& cfg) {
  init.validate();
  TrainState s;
  s.cloud = init;
  s.adam = Adam(init.size());
  s.stats = GrowthStats(init.size(), cfg.policy_config.k);
  return s;
}

std::vector<std::size_t> epoch_order(const std::vector<std::size_t>& train_views,
                                     std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order = train_views;
  std::mt19937_64 rng(mix(seed, 0x5eedull + epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

EvalResult evaluate(const GaussianCloud& cloud, const Scene& scene, Split split) {
  const auto views = scene.indices(split);
  if (views.empty()) {
    throw Error(ErrorKind::InvalidInput, std::string("no views in split '") + to_string(split) + "'");
  }
  EvalResult r;
  for (std::size_t v : views) {
    const RenderOutput out = render_view(cloud, scene.cameras[v], scene.background);
    r.psnr += psnr(out.image, scene.gt_images[v]);
    r.ssim += ssim_map(out.image, scene.gt_images[v]).mean();
  }
  r.psnr /= static_cast<double>(views.size());
  r.ssim /= static_cast<double>(views.size());
  return r;
}

void run_training(const Scene& scene, TrainState& state, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  scene.validate();
  const auto train_views = scene.indices(Split::Train);
  const auto test_views = scene.indices(Split::Test);
  const PolicyConfig pc = cfg.policy_config.resolved(cfg.total_iters);
  const double lr_scale = cfg.scale_means_lr_by_extent ? scene.extent : 1.0;
  if (state.stats.size() != state.cloud.size() || state.adam.size() != state.cloud.size()) {
    throw Error(ErrorKind::DimensionMismatch, "training state arrays differ from the cloud size");
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return state.elapsed_before +
           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::uint64_t cached_epoch = ~0ull;
  std::vector<std::size_t> order;
  const std::size_t n_train = train_views.size();

  while (state.iteration < cfg.total_iters) {
    const int t = state.iteration + 1;
    const std::uint64_t idx = static_cast<std::uint64_t>(t - 1);
    const std::uint64_t epoch = idx / n_train;
    if (epoch != cached_epoch) {
      order = epoch_order(train_views, cfg.seed, epoch);
      cached_epoch = epoch;
    }
    const std::size_t view = order[idx % n_train];
    const Camera& cam = scene.cameras[view];

    const RenderOutput render = render_view(state.cloud, cam, scene.background);
    SsimMap map;
    const LossGrad loss = combined_loss(render.image, scene.gt_images[view], cfg.lambda_ssim, &map);
    if (!std::isfinite(loss.value)) {
      dump_divergence(hooks.dump_dir, state.cloud, cam, render.image, t, "non-finite loss");
      throw Error(ErrorKind::Diverged, "non-finite loss at iteration " + std::to_string(t) +
                                           " on view " + std::to_string(cam.view_id));
    }
    const ParamGrads grads = backward_view(state.cloud, cam, render, loss.d_image);
    if (!grads.all_finite()) {
      dump_divergence(hooks.dump_dir, state.cloud, cam, render.image, t, "non-finite gradient");
      throw Error(ErrorKind::Diverged, "non-finite gradient at iteration " + std::to_string(t) +
                                           " on view " + std::to_string(cam.view_id));
    }

    const bool in_growth_window = t <= pc.densify_end;
    if (in_growth_window) {
      if (map.width != render.width()) map = ssim_map(render.image, scene.gt_images[view]);
      accumulate(state.stats, cam.view_id, grads, render, map, projected_means(render), pc);
    }

    LearningRates lr;
    lr.means = exp_decay(cfg.lr_means * lr_scale, cfg.lr_means_final * lr_scale, t - 1, cfg.total_iters);
    lr.scales = cfg.lr_scales;
    lr.rotations = cfg.lr_rotations;
    lr.opacities = cfg.lr_opacities;
    lr.colors = cfg.lr_colors;
    state.adam.step(state.cloud, grads, lr);

    if (in_growth_window && t % pc.interval == 0) {
      if (t >= pc.densify_start) {
        IntervalResult r = run_interval_policy(state.cloud, state.stats, pc, scene.extent,
                                               mix(cfg.seed, static_cast<std::uint64_t>(t)), t);
        state.adam.remap(r.lineage);
        state.cloud = std::move(r.cloud);
        state.stats = std::move(r.stats);
        state.growth_log.push_back(r.log);
      } else {
        state.stats = GrowthStats(state.cloud.size(), pc.k);
      }
    }
    if (pc.opacity_reset && in_growth_window && t % pc.opacity_reset_every == 0) {
      const double cap = logit(0.01);
      for (double& o : state.cloud.raw_opacities) o = std::min(o, cap);
    }

    state.iteration = t;

    if (t % cfg.eval_every == 0 || t == cfg.total_iters) {
      EvalRecord rec;
      rec.iteration = t;
      rec.train_psnr = evaluate(state.cloud, scene, Split::Train).psnr;
      if (!test_views.empty()) {
        const EvalResult e = evaluate(state.cloud, scene, Split::Test);
        rec.test_psnr = e.psnr;
        rec.test_ssim = e.ssim;
      }
      rec.n_gaussians = state.cloud.size();
      rec.wall_time = elapsed();
      state.records.push_back(rec);
      if (hooks.on_eval) hooks.on_eval(rec);
    }
    if (cfg.checkpoint_every > 0 && t % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      const double saved = state.elapsed_before;
      state.elapsed_before = elapsed();
      hooks.on_checkpoint(state);
      state.elapsed_before = saved;
    }
    if (hooks.stop_after >= 0 && t >= hooks.stop_after) break;
  }
  state.elapsed_before = elapsed();
}

TrainReport train(const Scene& scene, const GaussianCloud& init, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  TrainState state = initial_state(init, cfg);
  run_training(scene, state, cfg, hooks);
  TrainReport report;
  report.config = cfg;
  report.records = std::move(state.records);
  report.growth_log = std::move(state.growth_log);
  report.final_cloud = std::move(state.cloud);
  return report;
}

void save_checkpoint(const std::filesystem::path& prefix, const TrainState& state,
                     const TrainConfig& cfg) {
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  const std::filesystem::path cloud_path = prefix.string() + ".hgscloud";
  const std::filesystem::path state_path = prefix.string() + ".state";
  const std::filesystem::path json_path = prefix.string() + ".json";
  save_cloud(cloud_path, state.cloud);

  std::ofstream out(state_path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + state_path.string());
  out.write("HGSSTATE", 8);
  bin::put_u64(out, 1);
  bin::put_i64(out, state.iteration);
  bin::put_f64(out, state.elapsed_before);
  write_cloud_exact(out, state.cloud);
  state.adam.write(out);
  write_stats(out, state.stats);
  bin::put_u64(out, state.records.size());
  for (const auto& r : state.records) {
    bin::put_i64(out, r.iteration);
    bin::put_f64(out, r.train_psnr);
    bin::put_f64(out, r.test_psnr);
    bin::put_f64(out, r.test_ssim);
    bin::put_u64(out, r.n_gaussians);
    bin::put_f64(out, r.wall_time);
  }
  bin::put_u64(out, state.growth_log.size());
  for (const auto& g : state.growth_log) {
    bin::put_i64(out, g.iteration);
    bin::put_string(out, to_string(g.policy));
    for (std::size_t v : {g.n_before, g.og_count, g.pghgs_count, g.rehgs_count, g.effi_count,
                          g.union_count, g.pruned, g.n_after}) {
      bin::put_u64(out, v);
    }
  }
  out.close();
  if (!out) throw Error(ErrorKind::Io, "failed writing " + state_path.string());

  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(cfg.hash()));
  const nlohmann::json side = {
      {"iteration", state.iteration},
      {"n_gaussians", state.cloud.size()},
      {"cloud", cloud_path.filename().string()},
      {"state", state_path.filename().string()},
      {"config_hash", hash},
      {"config", cfg.to_json()},
  };
  std::ofstream(json_path) << side.dump(2) << "\n";
}

TrainState load_checkpoint(const std::filesystem::path& json_path, const TrainConfig& cfg,
                           bool allow_config_change) {
  std::ifstream js(json_path);
  if (!js) throw Error(ErrorKind::Io, "cannot read " + json_path.string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, json_path.string() + ": " + e.what());
  }
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(cfg.hash()));
  if (!allow_config_change && side.value("config_hash", std::string()) != hash) {
    throw Error(ErrorKind::InvalidInput, "checkpoint was written with a different training config");
  }
  const auto state_path = json_path.parent_path() / side.at("state").get<std::string>();
  std::ifstream in(state_path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + state_path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "HGSSTATE") throw Error(ErrorKind::Format, "bad state magic");
  if (bin::get_u64(in) != 1) throw Error(ErrorKind::Format, "unsupported state version");
  TrainState s;
  s.iteration = static_cast<int>(bin::get_i64(in));
  s.elapsed_before = bin::get_f64(in);
  s.cloud = read_cloud_exact(in);
  s.adam = Adam::read(in);
  s.stats = read_stats(in);
  const std::uint64_t nrec = bin::get_u64(in);
  for (std::uint64_t i = 0; i < nrec; ++i) {
    EvalRecord r;
    r.iteration = static_cast<int>(bin::get_i64(in));
    r.train_psnr = bin::get_f64(in);
    r.test_psnr = bin::get_f64(in);
    r.test_ssim = bin::get_f64(in);
    r.n_gaussians = bin::get_u64(in);
    r.wall_time = bin::get_f64(in);
    s.records.push_back(r);
  }
  const std::uint64_t nlog = bin::get_u64(in);
  for (std::uint64_t i = 0; i < nlog; ++i) {
    GrowthLogRow g;
    g.iteration = static_cast<int>(bin::get_i64(in));
    g.policy = parse_policy(bin::get_string(in));
    std::size_t* fields[] = {&g.n_before, &g.og_count, &g.pghgs_count, &g.rehgs_count,
                             &g.effi_count, &g.union_count, &g.pruned, &g.n_after};
    for (std::size_t* f : fields) *f = bin::get_u64(in);
    s.growth_log.push_back(g);
  }
  if (s.adam.size() != s.cloud.size() || s.stats.size() != s.cloud.size()) {
    throw Error(ErrorKind::Format, "checkpoint state arrays disagree in size");
  }
  return s;
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "iteration,train_psnr,test_psnr,test_ssim,n_gaussians\n";
  for (const auto& r : report.records) {
    out << r.iteration << ',' << format_fixed(r.train_psnr) << ',' << format_fixed(r.test_psnr) << ','
        << format_fixed(r.test_ssim) << ',' << r.n_gaussians << '\n';
  }
}

nlohmann::json report_json(const TrainReport& report) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : report.records) {
    records.push_back({{"iteration", r.iteration},
                       {"train_psnr", r.train_psnr},
                       {"test_psnr", r.test_psnr},
                       {"test_ssim", r.test_ssim},
                       {"n_gaussians", r.n_gaussians}});
  }
  nlohmann::json growth = nlohmann::json::array();
  for (const auto& g : report.growth_log) {
    growth.push_back({{"iteration", g.iteration},
                      {"N_before", g.n_before},
                      {"og_count", g.og_count},
                      {"pghgs_count", g.pghgs_count},
                      {"rehgs_count", g.rehgs_count},
                      {"effi_count", g.effi_count},
                      {"union_count", g.union_count},
                      {"pruned", g.pruned},
                      {"N_after", g.n_after}});
  }
  nlohmann::json j = {{"config", report.config.to_json()}, {"records", records}, {"growth_log", growth}};
  if (!report.records.empty()) {
    const auto& last = report.records.back();
    j["final"] = {{"iteration", last.iteration},
                  {"test_psnr", last.test_psnr},
                  {"test_ssim", last.test_ssim},
                  {"n_gaussians", last.n_gaussians}};
  }
  return j;
}

void write_timing_csv(std::ostream& out, const TrainReport& report) {
  out << "iteration,wall_time_s\n";
  for (const auto& r : report.records) out << r.iteration << ',' << format_fixed(r.wall_time) << '\n';
}

void write_report_files(const std::filesystem::path& dir, const TrainReport& report) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "report.csv");
    write_report_csv(f, report);
  }
  std::ofstream(dir / "report.json") << report_json(report).dump(2) << "\n";
  {
    std::ofstream f(dir / "growth_log.csv");
    write_growth_log_csv(f, report.growth_log);
  }
  {
    std::ofstream f(dir / "timing.csv");
    write_timing_csv(f, report);
  }
  save_cloud(dir / "final.hgscloud", report.final_cloud);
}

}  // namespace hgs
