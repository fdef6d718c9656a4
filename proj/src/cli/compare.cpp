#include "hgs/cli.hpp"

#include "hgs/cloud_io.hpp"
#include "hgs/error.hpp"
#include "hgs/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace hgs::cli {

namespace {

template <typename F>
double mean_of(const std::vector<CompareRun>& runs, F field) {
  double s = 0.0;
  for (const auto& r : runs) s += field(r);
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

template <typename F>
double std_of(const std::vector<CompareRun>& runs, F field) {
  if (runs.size() < 2) return 0.0;
  const double m = mean_of(runs, field);
  double s = 0.0;
  for (const auto& r : runs) s += (field(r) - m) * (field(r) - m);
  return std::sqrt(s / static_cast<double>(runs.size() - 1));
}

std::string tau_label(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", tau);
  return buf;
}

struct Job {
  std::size_t row;
  std::size_t run;
};

}  // namespace

double CompareRow::mean_psnr() const { return mean_of(runs, [](const CompareRun& r) { return r.test_psnr; }); }
double CompareRow::std_psnr() const { return std_of(runs, [](const CompareRun& r) { return r.test_psnr; }); }
double CompareRow::mean_ssim() const { return mean_of(runs, [](const CompareRun& r) { return r.test_ssim; }); }
double CompareRow::std_ssim() const { return std_of(runs, [](const CompareRun& r) { return r.test_ssim; }); }
double CompareRow::mean_n() const {
  return mean_of(runs, [](const CompareRun& r) { return static_cast<double>(r.final_n); });
}
double CompareRow::std_n() const {
  return std_of(runs, [](const CompareRun& r) { return static_cast<double>(r.final_n); });
}
double CompareRow::mean_wall() const { return mean_of(runs, [](const CompareRun& r) { return r.wall_time; }); }

void CompareSpec::validate() const {
  if (policies.empty() && tau_sweep.empty()) throw Error(ErrorKind::InvalidSpec, "compare needs at least one policy");
  if (seeds.empty()) throw Error(ErrorKind::InvalidSpec, "compare needs at least one seed");
  if (jobs < 1) throw Error(ErrorKind::InvalidSpec, "jobs must be >= 1");
  for (double t : tau_sweep) {
    if (!(t > 0.0)) throw Error(ErrorKind::InvalidSpec, "sweep thresholds must be positive");
  }
  config.validate();
}

std::vector<CompareRow> run_compare(const CompareSpec& spec) {
  spec.validate();
  const LoadedScene loaded = load_scene_source(spec.scene);

  std::vector<CompareRow> rows;
  for (double tau : spec.tau_sweep) {
    CompareRow row;
    row.label = "og-tau" + tau_label(tau);
    row.policy = Policy::Og;
    row.tau_grad = tau;
    rows.push_back(row);
  }
  for (Policy p : spec.policies) {
    CompareRow row;
    row.label = to_string(p);
    row.policy = p;
    row.tau_grad = spec.config.policy_config.tau_grad;
    rows.push_back(row);
  }
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    rows[r].runs.resize(spec.seeds.size());
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) jobs.push_back({r, s});
  }

  auto run_job = [&](std::size_t j) {
    CompareRow& row = rows[jobs[j].row];
    const std::uint64_t seed = spec.seeds[jobs[j].run];
    TrainConfig cfg = spec.config;
    cfg.seed = seed;
    cfg.policy_config.policy = row.policy;
    cfg.policy_config.tau_grad = row.tau_grad;
    const GaussianCloud init = make_init(loaded, spec.init, seed);
    const TrainReport report = train(loaded.scene, init, cfg);
    if (!spec.out_dir.empty()) {
      write_report_files(spec.out_dir / row.label / ("seed" + std::to_string(seed)), report);
    }
    CompareRun& run = row.runs[jobs[j].run];
    run.seed = seed;
    const EvalRecord& last = report.records.back();
    run.test_psnr = last.test_psnr;
    run.test_ssim = last.test_ssim;
    run.final_n = last.n_gaussians;
    run.wall_time = last.wall_time;
  };

  if (spec.jobs > 1) {
    const int saved = thread_count();
    set_thread_count(spec.jobs);
    try {
      parallel_for(jobs.size(), run_job);
    } catch (...) {
      set_thread_count(saved);
      throw;
    }
    set_thread_count(saved);
  } else {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  }

  if (!spec.out_dir.empty()) write_compare_tables(spec.out_dir, rows);
  return rows;
}

std::string compare_markdown(const std::vector<CompareRow>& rows) {
  std::ostringstream md;
  md << "| run | policy | tau_grad | seeds | test PSNR | test SSIM | final N | wall time (s) |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %g | %zu | %.3f ± %.3f | %.4f ± %.4f | %.1f ± %.1f | %.1f |\n",
                  r.label.c_str(), to_string(r.policy), r.tau_grad, r.runs.size(), r.mean_psnr(),
                  r.std_psnr(), r.mean_ssim(), r.std_ssim(), r.mean_n(), r.std_n(), r.mean_wall());
    md << buf;
  }
  return md.str();
}

void write_compare_tables(const std::filesystem::path& dir, const std::vector<CompareRow>& rows) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "compare.csv");
    f << "label,policy,tau_grad,seeds,test_psnr_mean,test_psnr_std,test_ssim_mean,test_ssim_std,"
         "final_n_mean,final_n_std\n";
    for (const auto& r : rows) {
      f << r.label << ',' << to_string(r.policy) << ',' << tau_label(r.tau_grad) << ',' << r.runs.size()
        << ',' << format_fixed(r.mean_psnr()) << ',' << format_fixed(r.std_psnr()) << ','
        << format_fixed(r.mean_ssim()) << ',' << format_fixed(r.std_ssim()) << ','
        << format_fixed(r.mean_n()) << ',' << format_fixed(r.std_n()) << '\n';
    }
  }
  {
    std::ofstream f(dir / "compare_runs.csv");
    f << "label,policy,tau_grad,seed,test_psnr,test_ssim,n_gaussians\n";
    for (const auto& r : rows) {
      for (const auto& run : r.runs) {
        f << r.label << ',' << to_string(r.policy) << ',' << tau_label(r.tau_grad) << ',' << run.seed
          << ',' << format_fixed(run.test_psnr) << ',' << format_fixed(run.test_ssim) << ','
          << run.final_n << '\n';
      }
    }
  }
  {
    std::ofstream f(dir / "compare_timing.csv");
    f << "label,seed,wall_time_s\n";
    for (const auto& r : rows) {
      for (const auto& run : r.runs) f << r.label << ',' << run.seed << ',' << format_fixed(run.wall_time) << '\n';
    }
  }
  std::ofstream(dir / "compare.md") << compare_markdown(rows);
}

}  // namespace hgs::cli
