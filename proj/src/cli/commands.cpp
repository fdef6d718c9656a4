#include "hgs/cli.hpp"

#include "hgs/cloud_io.hpp"
#include "hgs/error.hpp"
#include "hgs/image.hpp"
#include "hgs/parallel.hpp"
#include "hgs/renderer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace hgs::cli {

LoadedScene load_scene_source(const SceneSource& source) {
  LoadedScene out;
  if (source.dir.empty()) {
    SyntheticScene syn = gen_synthetic(source.spec, source.scene_seed);
    out.scene = std::move(syn.scene);
    out.gt_cloud = std::move(syn.gt_cloud);
    return out;
  }
  out.scene = load_scene(source.dir);
  const auto gt = source.dir / "gt.hgscloud";
  if (std::filesystem::exists(gt)) out.gt_cloud = load_cloud(gt);
  return out;
}

GaussianCloud make_init(const LoadedScene& loaded, const InitSetup& setup, std::uint64_t seed) {
  if (setup.mode == InitMode::GtSubsample && !loaded.gt_cloud) {
    throw Error(ErrorKind::InvalidInput,
                "gt-subsample initialization needs gt.hgscloud in the scene directory; "
                "use --init-mode random-ball");
  }
  return init_cloud(loaded.scene, setup.count, setup.mode, seed,
                    loaded.gt_cloud ? &*loaded.gt_cloud : nullptr);
}

namespace {

struct SceneArgs {
  std::string dir;
  SceneSource source;
  std::vector<double> background;

  SceneSource resolve() const {
    SceneSource s = source;
    s.dir = dir;
    if (background.size() == 3) s.spec.background = Vec3(background[0], background[1], background[2]);
    return s;
  }
};

void add_generator_options(CLI::App* app, SceneArgs& a) {
  SceneSpec& s = a.source.spec;
  app->add_option("--scene-seed", a.source.scene_seed, "Seed of the synthetic scene")->capture_default_str();
  app->add_option("--size", s.width, "Image width and height")->capture_default_str()->each([&s](const std::string& v) {
    s.height = std::stoi(v);
  });
  app->add_option("--views", s.views, "Number of cameras")->capture_default_str();
  app->add_option("--gaussians", s.gt_gaussians, "Ground-truth Gaussian count")->capture_default_str();
  app->add_option("--test-every", s.test_every, "Every n-th view is a test view")->capture_default_str();
  app->add_option("--ring-radius", s.ring_radius, "Camera ring radius")->capture_default_str();
  app->add_option("--fov", s.fov_deg, "Horizontal field of view in degrees")->capture_default_str();
  app->add_option("--background", a.background, "Background color r g b")->expected(3);
}

void add_scene_input(CLI::App* app, SceneArgs& a) {
  app->add_option("scene", a.dir, "Scene directory (omit for the synthetic scene)");
  add_generator_options(app, a);
}

struct TrainArgs {
  TrainConfig cfg;
  std::string policy = "og";
  std::string init_mode = "gt-subsample";
  InitSetup init;
  bool no_extent_lr = false;

  void add(CLI::App* app) {
    PolicyConfig& p = cfg.policy_config;
    app->add_option("--policy", policy, "og, pghgs, rehgs, hgs or effi-hgs")->capture_default_str();
    app->add_option("--iters", cfg.total_iters, "Training iterations")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Training seed")->capture_default_str();
    app->add_option("--eval-every", cfg.eval_every)->capture_default_str();
    app->add_option("--checkpoint-every", cfg.checkpoint_every, "0 disables")->capture_default_str();
    app->add_option("--lr-means", cfg.lr_means)->capture_default_str();
    app->add_option("--lr-means-final", cfg.lr_means_final)->capture_default_str();
    app->add_option("--lr-scales", cfg.lr_scales)->capture_default_str();
    app->add_option("--lr-rotations", cfg.lr_rotations)->capture_default_str();
    app->add_option("--lr-opacities", cfg.lr_opacities)->capture_default_str();
    app->add_option("--lr-colors", cfg.lr_colors)->capture_default_str();
    app->add_flag("--no-extent-lr", no_extent_lr, "Do not scale the mean learning rate by the scene extent");
    app->add_option("--lambda-ssim", cfg.lambda_ssim)->capture_default_str();
    app->add_option("--tau-grad", p.tau_grad)->capture_default_str();
    app->add_option("--grad-unit-scale", p.grad_unit_scale, "Multiplier taking tau-grad to pixel units")
        ->capture_default_str();
    app->add_option("--interval", p.interval, "Growth interval M")->capture_default_str();
    app->add_option("--k", p.k)->capture_default_str();
    app->add_option("--lambda", p.lambda)->capture_default_str();
    app->add_option("--tau-large", p.tau_large)->capture_default_str();
    app->add_option("--tau-ssim", p.tau_ssim)->capture_default_str();
    app->add_option("--densify-start", p.densify_start)->capture_default_str();
    app->add_option("--densify-end", p.densify_end, "< 0 means 60% of --iters")->capture_default_str();
    app->add_option("--percent-dense", p.percent_dense)->capture_default_str();
    app->add_option("--prune-opacity", p.prune_opacity)->capture_default_str();
    app->add_flag("--opacity-reset", p.opacity_reset);
    app->add_option("--init-count", init.count)->capture_default_str();
    app->add_option("--init-mode", init_mode, "gt-subsample or random-ball")->capture_default_str();
  }

  TrainConfig resolve() {
    cfg.policy_config.policy = parse_policy(policy);
    init.mode = parse_init_mode(init_mode);
    if (no_extent_lr) cfg.scale_means_lr_by_extent = false;
    cfg.validate();
    return cfg;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

GaussianCloud load_cloud_arg(const std::string& cloud, const std::string& checkpoint) {
  if (!checkpoint.empty()) return load_checkpoint(checkpoint, TrainConfig{}, true).cloud;
  if (cloud.empty()) throw Error(ErrorKind::InvalidInput, "give --cloud or --checkpoint");
  return load_cloud(cloud);
}

void print_record(const EvalRecord& r) {
  std::printf("iter %6d  train PSNR %7.3f  test PSNR %7.3f  test SSIM %.4f  N %zu  (%.1fs)\n", r.iteration,
              r.train_psnr, r.test_psnr, r.test_ssim, r.n_gaussians, r.wall_time);
  std::fflush(stdout);
}

bool usage_error(ErrorKind k) { return k == ErrorKind::InvalidSpec || k == ErrorKind::InvalidInput; }

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Hard-Gaussian densification on a CPU Gaussian-splatting trainer"};
  app.set_config("--config", "", "TOML config file; command-line flags override it");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: HGS_THREADS or all cores)");

  // gen-scene
  auto* gen = app.add_subcommand("gen-scene", "Generate a synthetic scene directory");
  SceneArgs gen_args;
  std::string gen_out;
  gen->add_option("out", gen_out, "Output directory")->required();
  add_generator_options(gen, gen_args);
  gen->add_option("--seed", gen_args.source.scene_seed, "Scene seed")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train one policy on a scene");
  SceneArgs tr_scene;
  TrainArgs tr_args;
  std::string tr_out = "run", tr_resume, tr_dump;
  int tr_stop = -1;
  add_scene_input(tr, tr_scene);
  tr_args.add(tr);
  tr->add_option("--out", tr_out, "Output directory")->capture_default_str();
  tr->add_option("--resume", tr_resume, "Checkpoint sidecar JSON to continue from");
  tr->add_option("--stop-after", tr_stop, "Stop (resumably) after this iteration");
  tr->add_option("--dump-dir", tr_dump, "Where a diverged run writes its dump (default: <out>/divergence)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a cloud on a scene split");
  SceneArgs ev_scene;
  std::string ev_cloud, ev_ckpt, ev_split = "test";
  add_scene_input(ev, ev_scene);
  ev->add_option("--cloud", ev_cloud, "HGSCLOUD file");
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint sidecar JSON");
  ev->add_option("--split", ev_split, "train or test")->capture_default_str();

  // compare
  auto* cmp = app.add_subcommand("compare", "Train several policies over several seeds");
  SceneArgs cmp_scene;
  TrainArgs cmp_args;
  std::string cmp_policies = "og,hgs", cmp_seeds = "1,2,3", cmp_sweep, cmp_out = "compare";
  int cmp_jobs = 1;
  add_scene_input(cmp, cmp_scene);
  cmp_args.add(cmp);
  cmp->add_option("--policies", cmp_policies, "Comma-separated policies")->capture_default_str();
  cmp->add_option("--seeds", cmp_seeds, "Comma-separated seeds")->capture_default_str();
  cmp->add_option("--tau-grad-sweep", cmp_sweep, "Comma-separated thresholds for extra OG rows");
  cmp->add_option("--out", cmp_out)->capture_default_str();
  cmp->add_option("--jobs", cmp_jobs, "Concurrent runs")->capture_default_str();

  // render
  auto* rn = app.add_subcommand("render", "Render a cloud from scene cameras");
  SceneArgs rn_scene;
  std::string rn_cloud, rn_ckpt, rn_out = "renders";
  int rn_view = -1;
  add_scene_input(rn, rn_scene);
  rn->add_option("--cloud", rn_cloud);
  rn->add_option("--checkpoint", rn_ckpt);
  rn->add_option("--view", rn_view, "View id (default: all views)");
  rn->add_option("--out", rn_out)->capture_default_str();

  // diag
  auto* dg = app.add_subcommand("diag", "Rendered-index, SSIM and hard-Gaussian diagnostic maps");
  SceneArgs dg_scene;
  std::string dg_cloud, dg_ckpt, dg_out = "diag";
  int dg_view = 0;
  PolicyConfig dg_cfg;
  double dg_lambda = 0.2;
  add_scene_input(dg, dg_scene);
  dg->add_option("--cloud", dg_cloud);
  dg->add_option("--checkpoint", dg_ckpt);
  dg->add_option("--view", dg_view, "View id")->required();
  dg->add_option("--out", dg_out)->capture_default_str();
  dg->add_option("--tau-large", dg_cfg.tau_large)->capture_default_str();
  dg->add_option("--tau-ssim", dg_cfg.tau_ssim)->capture_default_str();
  dg->add_option("--lambda-ssim", dg_lambda)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads > 0) set_thread_count(threads);

    if (*gen) {
      SceneSource src = gen_args.resolve();
      SyntheticScene syn = gen_synthetic(src.spec, src.scene_seed);
      save_scene(gen_out, syn.scene);
      save_cloud(std::filesystem::path(gen_out) / "gt.hgscloud", syn.gt_cloud);
      std::printf("wrote %zu views to %s\n", syn.scene.size(), gen_out.c_str());
      return 0;
    }

    if (*tr) {
      const TrainConfig cfg = tr_args.resolve();
      const LoadedScene loaded = load_scene_source(tr_scene.resolve());
      const std::filesystem::path out = tr_out;
      TrainHooks hooks;
      hooks.stop_after = tr_stop;
      hooks.dump_dir = tr_dump.empty() ? out / "divergence" : std::filesystem::path(tr_dump);
      hooks.on_eval = print_record;
      hooks.on_checkpoint = [&](const TrainState& s) {
        save_checkpoint(out / "checkpoints" / ("iter" + std::to_string(s.iteration)), s, cfg);
      };
      TrainState state = tr_resume.empty() ? initial_state(make_init(loaded, tr_args.init, cfg.seed), cfg)
                                           : load_checkpoint(tr_resume, cfg);
      run_training(loaded.scene, state, cfg, hooks);
      save_checkpoint(out / "final", state, cfg);
      if (state.iteration < cfg.total_iters) {
        std::printf("stopped at iteration %d; resume with --resume %s\n", state.iteration,
                    (out / "final.json").c_str());
        return 0;
      }
      TrainReport report;
      report.config = cfg;
      report.records = state.records;
      report.growth_log = state.growth_log;
      report.final_cloud = state.cloud;
      write_report_files(out, report);
      std::printf("final N %zu; reports in %s\n", state.cloud.size(), out.c_str());
      return 0;
    }

    if (*ev) {
      const LoadedScene loaded = load_scene_source(ev_scene.resolve());
      const GaussianCloud cloud = load_cloud_arg(ev_cloud, ev_ckpt);
      const Split split = parse_split(ev_split);
      const EvalResult r = evaluate(cloud, loaded.scene, split);
      std::printf("split,views,psnr,ssim,n_gaussians\n%s,%zu,%s,%s,%zu\n", to_string(split),
                  loaded.scene.indices(split).size(), format_fixed(r.psnr).c_str(),
                  format_fixed(r.ssim).c_str(), cloud.size());
      return 0;
    }

    if (*cmp) {
      CompareSpec spec;
      spec.config = cmp_args.resolve();
      spec.init = cmp_args.init;
      spec.scene = cmp_scene.resolve();
      for (const auto& p : split_list(cmp_policies)) spec.policies.push_back(parse_policy(p));
      for (const auto& s : split_list(cmp_seeds)) spec.seeds.push_back(std::stoull(s));
      for (const auto& t : split_list(cmp_sweep)) spec.tau_sweep.push_back(std::stod(t));
      spec.out_dir = cmp_out;
      spec.jobs = cmp_jobs;
      const auto rows = run_compare(spec);
      std::cout << compare_markdown(rows);
      return 0;
    }

    if (*rn) {
      const LoadedScene loaded = load_scene_source(rn_scene.resolve());
      const GaussianCloud cloud = load_cloud_arg(rn_cloud, rn_ckpt);
      std::filesystem::create_directories(rn_out);
      for (std::size_t v = 0; v < loaded.scene.size(); ++v) {
        const Camera& cam = loaded.scene.cameras[v];
        if (rn_view >= 0 && cam.view_id != rn_view) continue;
        const RenderOutput out = render_view(cloud, cam, loaded.scene.background);
        write_png(std::filesystem::path(rn_out) / ("view" + std::to_string(cam.view_id) + ".png"), out.image);
      }
      if (rn_view >= 0) loaded.scene.index_of_view(rn_view);
      return 0;
    }

    if (*dg) {
      dg_cfg.validate();
      const LoadedScene loaded = load_scene_source(dg_scene.resolve());
      const GaussianCloud cloud = load_cloud_arg(dg_cloud, dg_ckpt);
      const DiagBundle b = make_diag(cloud, loaded.scene, dg_view, dg_cfg, dg_lambda);
      write_diag(dg_out, b);
      std::printf("view %d: %zu over-large, %zu hard; maps in %s\n", dg_view, b.over_large.size(),
                  b.hard.size(), dg_out.c_str());
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    if (usage_error(e.kind())) {
      std::fprintf(stderr, "%s", app.help().c_str());
      return 2;
    }
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace hgs::cli
