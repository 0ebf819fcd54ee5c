// stylecore command-line front end: one-shot stylization, the REMD/EMD
// experiment and the job service.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stylecore/error.hpp"
#include "stylecore/imageio.hpp"
#include "stylecore/service/emd_check.hpp"
#include "stylecore/service/http.hpp"
#include "stylecore/service/job_request.hpp"
#include "stylecore/service/jobs.hpp"

namespace svc = stylecore::service;
using svc::json;

namespace {

struct IoFlags {
  std::string content;
  std::string style;
  std::string out;
  bool print_config = false;
};

void add_io(CLI::App* cmd, IoFlags& io) {
  cmd->add_option("--content", io.content, "content image (PNG/JPEG)");
  cmd->add_option("--style", io.style, "style image (PNG/JPEG)");
  cmd->add_option("--out", io.out, "output image path");
  cmd->add_flag("--print-config", io.print_config, "print the resolved config as JSON and exit");
}

// Collects every flag the user actually passed into a config document.
struct ConfigBuilder {
  json j;
  std::vector<std::function<void()>> pending;

  template <typename T>
  void option(CLI::App* cmd, const std::string& key, T& value, const std::string& help) {
    CLI::Option* o = cmd->add_option("--" + key, value, help);
    pending.push_back([this, o, key, &value] {
      if (o->count()) j[key] = value;
    });
  }
  void finish() {
    for (auto& f : pending) f();
  }
};

void progress_line(const stylecore::ProgressEvent& ev) {
  if (ev.step == ev.steps) {
    std::fprintf(stderr, "scale %d/%d  step %d/%d  loss %.6g\n", ev.scale + 1, ev.scales, ev.step, ev.steps, ev.loss);
  }
}

int run_stylize(svc::JobKind kind, const IoFlags& io, ConfigBuilder& cfg, const std::string& guidance,
                const std::string& points) {
  cfg.finish();
  cfg.j["kind"] = svc::to_string(kind);
  const svc::JobRequest req = svc::parse_job_config(cfg.j);
  if (io.print_config) {
    std::cout << req.to_json().dump(2) << '\n';
    return 0;
  }
  if (io.content.empty() || io.style.empty() || io.out.empty()) {
    throw stylecore::Error(stylecore::ErrorKind::InvalidArgument, "--content, --style and --out are required");
  }
  svc::JobInputs in;
  in.content = stylecore::read_image(io.content);
  in.style = stylecore::read_image(io.style);
  if (!guidance.empty()) in.guidance = svc::load_guidance_file(guidance);
  if (!points.empty()) in.correspondences = svc::load_correspondence_file(points);
  stylecore::RunControl control;
  control.on_progress = progress_line;
  control.preview_every = 0;
  const svc::JobOutput out = svc::run_job(req, in, &control);
  stylecore::write_image(out.image, io.out);
  std::cerr << out.stats.dump() << '\n';
  return 0;
}

svc::HttpService* g_http = nullptr;

void on_signal(int) {
  if (g_http) g_http->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stylecore: optimization-based neural style transfer"};
  app.require_subcommand(1);

  // strotss
  IoFlags s_io;
  ConfigBuilder s_cfg;
  std::string s_guidance;
  double s_alpha = 16;
  int s_scales = 4, s_steps = 200, s_samples = 1024, s_size = 64;
  long s_seed = 1;
  auto* strotss = app.add_subcommand("strotss", "STROTSS style transfer");
  add_io(strotss, s_io);
  s_cfg.option(strotss, "alpha", s_alpha, "content weight (halved per scale)");
  s_cfg.option(strotss, "scales", s_scales, "number of scales");
  s_cfg.option(strotss, "seed", s_seed, "random seed");
  s_cfg.option(strotss, "steps", s_steps, "optimizer steps per scale");
  s_cfg.option(strotss, "samples", s_samples, "feature samples per step");
  s_cfg.option(strotss, "size", s_size, "long side of the coarsest scale");
  strotss->add_option("--guidance", s_guidance, "guidance document (JSON)");

  // nnst
  IoFlags n_io;
  ConfigBuilder n_cfg;
  double n_blend = 0.25;
  int n_size = 256, n_scales = 4, n_updates = 200, n_split = 200;
  long n_seed = 1;
  bool n_no_color = false;
  auto* nnst = app.add_subcommand("nnst", "NNST-Opt style transfer");
  add_io(nnst, n_io);
  n_cfg.option(nnst, "alpha-blend", n_blend, "content blend for target matching");
  n_cfg.option(nnst, "seed", n_seed, "random seed");
  n_cfg.option(nnst, "size", n_size, "long side of the finest scale");
  n_cfg.option(nnst, "scales", n_scales, "number of scales");
  n_cfg.option(nnst, "updates", n_updates, "Adam updates per scale");
  n_cfg.option(nnst, "split-updates", n_split, "updates in the per-layer phase");
  nnst->add_flag("--no-color-post", n_no_color, "skip colour post-processing");

  // dst
  IoFlags d_io;
  ConfigBuilder d_cfg;
  std::string d_points, d_base = "strotss", d_regime;
  double d_alpha = 16, d_beta = 0.5, d_gamma = 50;
  int d_scales = 4, d_steps = 200, d_samples = 1024, d_size = 64;
  long d_seed = 1;
  bool d_no_clean = false;
  auto* dst = app.add_subcommand("dst", "deformable style transfer");
  add_io(dst, d_io);
  dst->add_option("--points", d_points, "correspondence file (JSON)");
  d_cfg.option(dst, "base", d_base, "base method: strotss or gram");
  d_cfg.option(dst, "alpha", d_alpha, "content weight");
  d_cfg.option(dst, "beta", d_beta, "deformation weight");
  d_cfg.option(dst, "gamma", d_gamma, "warp-field TV weight");
  d_cfg.option(dst, "regime", d_regime, "preset (beta, gamma): low, med or high");
  d_cfg.option(dst, "scales", d_scales, "number of scales");
  d_cfg.option(dst, "seed", d_seed, "random seed");
  d_cfg.option(dst, "steps", d_steps, "optimizer steps per scale");
  d_cfg.option(dst, "samples", d_samples, "feature samples per step");
  d_cfg.option(dst, "size", d_size, "long side of the coarsest scale");
  dst->add_flag("--no-clean", d_no_clean, "keep correspondences as given (manual points)");

  // emd-check
  svc::EmdCheckOptions e_opts;
  std::string e_report;
  long e_seed = 1;
  auto* emd = app.add_subcommand("emd-check", "compare REMD with the exact EMD on sampled features");
  emd->add_option("--n", e_opts.n, "samples per side");
  emd->add_option("--trials", e_opts.trials, "number of trials");
  emd->add_option("--seed", e_seed, "random seed");
  emd->add_option("--report", e_report, "CSV output path");
  emd->add_option("--images", e_opts.images, "two images to sample features from")->expected(2);
  emd->add_option("--features", e_opts.features, "two FEAT1 feature files")->expected(2);

  // serve
  int port = 8080;
  std::string host = "127.0.0.1", assets, results;
  int workers = 0;
  auto* serve = app.add_subcommand("serve", "start the job service and static UI");
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--assets", assets, "static files served at /");
  serve->add_option("--workers", workers, "worker slots (0 = half the cores)");
  serve->add_option("--results", results, "directory for result files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*strotss) return run_stylize(svc::JobKind::Strotss, s_io, s_cfg, s_guidance, "");
    if (*nnst) {
      if (n_no_color) n_cfg.j["color-post"] = false;
      return run_stylize(svc::JobKind::Nnst, n_io, n_cfg, "", "");
    }
    if (*dst) {
      if (d_no_clean) d_cfg.j["clean"] = false;
      if (d_points.empty() && !d_io.print_config) {
        throw stylecore::Error(stylecore::ErrorKind::InvalidArgument, "--points is required");
      }
      return run_stylize(svc::JobKind::Dst, d_io, d_cfg, "", d_points);
    }
    if (*emd) {
      e_opts.seed = static_cast<std::uint64_t>(e_seed);
      const svc::EmdCheckReport rep = svc::run_emd_check(e_opts);
      if (!e_report.empty()) {
        std::ofstream f(e_report);
        if (!f) throw stylecore::Error(stylecore::ErrorKind::Io, "cannot write " + e_report);
        rep.write_csv(f);
      }
      std::printf("n=%d trials=%zu mean_ratio=%.4f std_ratio=%.4f max_ratio=%.6f\n", rep.n, rep.trials.size(),
                  rep.mean_ratio, rep.std_ratio, rep.max_ratio);
      return rep.max_ratio <= 1.0 + 1e-9 ? 0 : 1;
    }
    if (*serve) {
      svc::JobManager jobs({workers, results});
      svc::HttpService http(jobs, assets);
      g_http = &http;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::fprintf(stderr, "listening on http://%s:%d (%d workers)\n", host.c_str(), port, jobs.workers());
      if (!http.listen(host, port)) throw stylecore::Error(stylecore::ErrorKind::Io, "cannot bind port");
      g_http = nullptr;
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stylecore: %s\n", e.what());
    return 1;
  }
  return 0;
}
