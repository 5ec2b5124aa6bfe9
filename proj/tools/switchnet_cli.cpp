// Command-line front end: data generation, operator analysis, training and evaluation.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "switchnet/errors.hpp"
#include "switchnet/gradcheck.hpp"
#include "switchnet/helmholtz.hpp"
#include "switchnet/model.hpp"
#include "switchnet/operator_factor.hpp"
#include "switchnet/pipeline.hpp"

using namespace switchnet;

namespace {

struct Geometry {
  std::string kind = "far-field";
  double omega = 24.0;
  int n = 32;
  int m = 0;  // 0: same as n
  double depth = 0.45;

  int receivers() const { return m > 0 ? m : n; }
};

void add_geometry(CLI::App* app, Geometry& g) {
  app->add_option("--kind", g.kind, "far-field | seismic")->capture_default_str();
  app->add_option("--omega", g.omega, "angular frequency")->capture_default_str();
  app->add_option("--grid-n", g.n, "grid points per side of Omega")->capture_default_str();
  app->add_option("--m", g.m, "number of sources/receivers (default: grid-n)");
  app->add_option("--depth", g.depth, "seismic source/receiver line")->capture_default_str();
}

BornOperator make_operator(const Geometry& g) {
  const GridSpec grid = make_grid(g.n, g.omega);
  if (parse_kind(g.kind) == ProblemKind::FarField) return BornOperator::far_field(grid, g.receivers());
  const BackgroundModel model = homogeneous_background(grid);
  return BornOperator::seismic(
      make_seismic_background(grid, model, make_receiver_line(g.receivers(), g.depth, grid)));
}

Geometry geometry_of(const Dataset& data, double depth) {
  Geometry g;
  g.kind = to_string(data.header.kind);
  g.omega = data.header.omega;
  g.n = data.header.n;
  g.m = data.header.m;
  g.depth = depth;
  return g;
}

PlotFormat parse_format(const std::string& s) {
  if (s == "pgm") return PlotFormat::Pgm;
  if (s == "csv") return PlotFormat::Csv;
  throw ConfigError("unknown plot format '" + s + "' (pgm | csv)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SwitchNet: wave-scattering simulation, butterfly factorization and learned inversion"};
  app.require_subcommand(1);

  // gen-data
  Geometry gen_geo;
  int gen_count = 100, gen_ns = 2, gen_threads = 1;
  double gen_beta = 0.2, gen_sigma = 0.0;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "simulate (eta, d) pairs into a dataset file");
  add_geometry(gen, gen_geo);
  gen->add_option("--count", gen_count, "number of samples")->capture_default_str();
  gen->add_option("--ns", gen_ns, "Gaussian bumps per scatterer")->capture_default_str();
  gen->add_option("--beta", gen_beta, "bump amplitude")->capture_default_str();
  gen->add_option("--sigma", gen_sigma, "bump width (default 0.9/omega)");
  gen->add_option("--seed", gen_seed, "master seed")->capture_default_str();
  gen->add_option("--threads", gen_threads, "worker threads")->capture_default_str();
  gen->add_option("--out", gen_out, "output dataset path")->required();

  // ranks
  Geometry rank_geo;
  int rank_px = 16, rank_pd = 16;
  std::vector<double> rank_tols{1e-3};
  std::string rank_out;
  auto* ranks = app.add_subcommand("ranks", "blockwise numerical rank report (CSV)");
  add_geometry(ranks, rank_geo);
  ranks->add_option("--px", rank_px, "X partition count")->capture_default_str();
  ranks->add_option("--pd", rank_pd, "D partition count")->capture_default_str();
  ranks->add_option("--tol", rank_tols, "relative singular value tolerance(s)");
  ranks->add_option("--out", rank_out, "CSV path (default: stdout)");

  // factorize
  Geometry fac_geo;
  int fac_px = 16, fac_pd = 16, fac_t = 3;
  auto* factor = app.add_subcommand("factorize", "build the switch factorization and report its error");
  add_geometry(factor, fac_geo);
  factor->add_option("--px", fac_px)->capture_default_str();
  factor->add_option("--pd", fac_pd)->capture_default_str();
  factor->add_option("--t", fac_t, "rank per block")->capture_default_str();

  // backproject
  std::string bp_data, bp_out;
  double bp_eps = 1e-3, bp_depth = 0.45;
  int bp_sample = -1;
  auto* bp = app.add_subcommand("backproject", "filtered back-projection baseline on a dataset");
  bp->add_option("--data", bp_data, "dataset path")->required();
  bp->add_option("--eps", bp_eps, "regularization relative to ||A*A||")->capture_default_str();
  bp->add_option("--sample", bp_sample, "single sample index (default: all)");
  bp->add_option("--depth", bp_depth, "seismic line depth")->capture_default_str();
  bp->add_option("--out", bp_out, "PGM of the reconstruction (single sample)");

  // train
  std::string tr_train, tr_test, tr_out, tr_dir = "inverse", tr_init = "glorot", tr_trace;
  int tr_t = 3, tr_px = 16, tr_pd = 16, tr_w = 5, tr_alpha = 8, tr_layers = 3, tr_batch = 200,
      tr_epochs = 1, tr_every = 0, tr_threads = 1, tr_eval_every = 0;
  double tr_lr = 0.002, tr_depth = 0.45;
  std::uint64_t tr_seed = 0;
  bool tr_normalize = false, tr_quiet = false;
  auto* tr = app.add_subcommand("train", "train a SwitchNet on a dataset");
  tr->add_option("--train", tr_train, "training dataset")->required();
  tr->add_option("--test", tr_test, "test dataset evaluated after training");
  tr->add_option("--direction", tr_dir, "inverse | forward")->capture_default_str();
  tr->add_option("--t", tr_t)->capture_default_str();
  tr->add_option("--px", tr_px)->capture_default_str();
  tr->add_option("--pd", tr_pd)->capture_default_str();
  tr->add_option("--window", tr_w, "conv window w")->capture_default_str();
  tr->add_option("--channels", tr_alpha, "conv channels alpha")->capture_default_str();
  tr->add_option("--layers", tr_layers, "conv layers L")->capture_default_str();
  tr->add_option("--lr", tr_lr)->capture_default_str();
  tr->add_option("--batch", tr_batch)->capture_default_str();
  tr->add_option("--epochs", tr_epochs)->capture_default_str();
  tr->add_option("--seed", tr_seed)->capture_default_str();
  tr->add_option("--init", tr_init, "glorot | factorization")->capture_default_str();
  tr->add_option("--depth", tr_depth, "seismic line depth (factorization init)")->capture_default_str();
  tr->add_option("--checkpoint-every", tr_every, "epochs between checkpoints")->capture_default_str();
  tr->add_option("--threads", tr_threads, "data-parallel gradient workers")->capture_default_str();
  tr->add_flag("--normalize", tr_normalize, "max-modulus scaling of inputs and targets");
  tr->add_option("--loss-trace", tr_trace, "CSV of per-step losses");
  tr->add_flag("--quiet", tr_quiet, "suppress per-epoch output");
  tr->add_option("--eval-every", tr_eval_every, "report the test error every k epochs")->capture_default_str();
  tr->add_option("--out", tr_out, "checkpoint path")->required();

  // eval
  std::string ev_ckpt, ev_data;
  auto* ev = app.add_subcommand("eval", "mean relative error of a checkpoint on a dataset");
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();

  // gradcheck
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks for every layer");
  gc->add_option("--seed", gc_seed)->capture_default_str();

  // plot
  std::string pl_data, pl_ckpt, pl_what = "eta", pl_format = "pgm", pl_out;
  int pl_sample = 0;
  auto* pl = app.add_subcommand("plot", "render a dataset field or a model prediction");
  pl->add_option("--data", pl_data)->required();
  pl->add_option("--sample", pl_sample)->capture_default_str();
  pl->add_option("--what", pl_what, "eta | d | pred")->capture_default_str();
  pl->add_option("--checkpoint", pl_ckpt, "model for --what pred");
  pl->add_option("--format", pl_format, "pgm | csv")->capture_default_str();
  pl->add_option("--out", pl_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*gen) {
      GenerateConfig cfg;
      cfg.kind = parse_kind(gen_geo.kind);
      cfg.omega = gen_geo.omega;
      cfg.n = gen_geo.n;
      cfg.m = gen_geo.receivers();
      cfg.count = gen_count;
      cfg.mixture = default_mixture(cfg.kind, cfg.omega, gen_ns, gen_beta);
      if (gen_sigma > 0.0) cfg.mixture.sigma = gen_sigma;
      cfg.depth = gen_geo.depth;
      cfg.seed = gen_seed;
      cfg.threads = gen_threads;
      const Dataset data = generate_dataset(cfg);
      write_dataset(gen_out, data);
      std::printf("wrote %d samples to %s\n", gen_count, gen_out.c_str());
    } else if (*ranks) {
      const BornOperator op = make_operator(rank_geo);
      const BlockRankReport report = block_rank_report(op, rank_pd, rank_px, rank_tols);
      if (rank_out.empty()) {
        report.write_csv(std::cout);
      } else {
        std::ofstream out(rank_out);
        if (!out) throw ConfigError("cannot open " + rank_out);
        report.write_csv(out);
      }
      for (std::size_t k = 0; k < rank_tols.size(); ++k)
        std::fprintf(stderr, "tol %g: max rank %d of block %dx%d\n", rank_tols[k], report.max_rank(k),
                     report.rows_per_block, report.cols_per_block);
    } else if (*factor) {
      const BornOperator op = make_operator(fac_geo);
      const SwitchFactorization f = build_factorization(op, fac_pd, fac_px, fac_t);
      const double err = factorization_error(op, f);
      const double tail = eckart_young_tail(op, fac_pd, fac_px, f.t);
      std::printf("t=%d%s storage=%zu error=%.6e eckart_young_tail=%.6e\n", f.t,
                  f.clamped ? " (clamped)" : "", f.storage_entries(), err, tail);
    } else if (*bp) {
      const Dataset data = read_dataset(bp_data);
      const BornOperator op = make_operator(geometry_of(data, bp_depth));
      const double eps = bp_eps * normal_operator_norm(op);
      std::vector<std::vector<cplx>> pred, truth;
      const std::size_t lo = bp_sample >= 0 ? static_cast<std::size_t>(bp_sample) : 0;
      const std::size_t hi = bp_sample >= 0 ? lo + 1 : data.size();
      if (hi > data.size()) throw ConfigError("sample index out of range");
      for (std::size_t k = lo; k < hi; ++k) {
        const BackprojectionResult r = filtered_backprojection(op, data.samples[k].d, eps);
        pred.emplace_back(r.field.values.begin(), r.field.values.end());
        truth.emplace_back(data.samples[k].eta.begin(), data.samples[k].eta.end());
        if (!bp_out.empty() && bp_sample >= 0)
          emit_plot(r.field.values, data.header.n, data.header.n, bp_out, PlotFormat::Pgm);
      }
      const Metrics m = relative_errors(pred, truth);
      std::printf("mean relative error %.6e over %zu samples\n", m.mean_relative_error, m.per_sample.size());
    } else if (*tr) {
      const Dataset train_set = read_dataset(tr_train);
      TrainConfig cfg;
      ModelSpec& s = cfg.spec;
      s.kind = train_set.header.kind;
      s.direction = parse_direction(tr_dir);
      s.n = train_set.header.n;
      s.m = train_set.header.m;
      s.t = tr_t;
      s.p_x = tr_px;
      s.p_d = tr_pd;
      s.w = tr_w;
      s.alpha = tr_alpha;
      s.layers = tr_layers;
      if (tr_init == "factorization") s.init = InitMode::FromFactorization;
      else if (tr_init != "glorot") throw ConfigError("unknown init '" + tr_init + "'");
      s.validate();
      cfg.lr = tr_lr;
      cfg.batch = tr_batch;
      cfg.epochs = tr_epochs;
      cfg.seed = tr_seed;
      cfg.threads = tr_threads;
      cfg.normalize = tr_normalize;
      cfg.checkpoint_every = tr_every;
      cfg.checkpoint_path = tr_out;
      if (s.init == InitMode::FromFactorization) {
        const BornOperator op = make_operator(geometry_of(train_set, tr_depth));
        cfg.factorization = build_factorization(op, s.p_d, s.p_x, s.t);
      }
      std::optional<Dataset> test_set;
      if (!tr_test.empty()) test_set = read_dataset(tr_test);
      if (test_set) check_compatible(s, *test_set);
      if (tr_eval_every > 0 && !test_set) throw ConfigError("--eval-every needs --test");
      cfg.on_epoch = [&](int epoch, double loss, const ModelParams& params) {
        if (tr_quiet) return;
        std::printf("epoch %d loss %.6e", epoch + 1, loss);
        if (tr_eval_every > 0 && (epoch + 1) % tr_eval_every == 0)
          std::printf(" test error %.4e", evaluate(params, *test_set).mean_relative_error);
        std::printf("\n");
        std::fflush(stdout);
      };
      const TrainResult result = train(cfg, train_set);
      if (!tr_trace.empty()) {
        std::ofstream out(tr_trace);
        if (!out) throw ConfigError("cannot open " + tr_trace);
        out << "step,loss\n";
        char buf[32];
        for (std::size_t k = 0; k < result.metrics.loss_trace.size(); ++k) {
          std::snprintf(buf, sizeof buf, "%.17g", result.metrics.loss_trace[k]);
          out << k << ',' << buf << '\n';
        }
      }
      std::printf("parameters %zu, final step loss %.6e\n", result.params.count(),
                  result.metrics.loss_trace.back());
      if (test_set) {
        const Metrics m = evaluate(result.params, *test_set);
        std::printf("test mean relative error %.6e\n", m.mean_relative_error);
      }
    } else if (*ev) {
      const ModelParams params = load_checkpoint(ev_ckpt);
      const Metrics m = evaluate(params, read_dataset(ev_data));
      std::printf("mean relative error %.6e over %zu samples", m.mean_relative_error, m.per_sample.size());
      if (!m.excluded.empty()) std::printf(" (%zu zero-norm samples excluded)", m.excluded.size());
      std::printf("\n");
    } else if (*gc) {
      bool ok = true;
      for (const GradCheckResult& r : run_gradient_suite(gc_seed)) {
        const bool pass = r.max_relative_error <= 1e-5;
        ok = ok && pass;
        std::printf("%-40s %4s  max rel err %.3e over %zu derivatives\n", r.name.c_str(),
                    pass ? "ok" : "FAIL", r.max_relative_error, r.checked);
      }
      if (!ok) return 2;
    } else if (*pl) {
      const Dataset data = read_dataset(pl_data);
      if (pl_sample < 0 || static_cast<std::size_t>(pl_sample) >= data.size())
        throw ConfigError("sample index out of range");
      const Sample& s = data.samples[pl_sample];
      const PlotFormat fmt = parse_format(pl_format);
      const int n = data.header.n, m = data.header.m;
      if (pl_what == "eta") {
        emit_plot(s.eta, n, n, pl_out, fmt);
      } else if (pl_what == "d") {
        emit_plot(std::span<const cplx>(s.d), m, m, pl_out, fmt);
      } else if (pl_what == "pred") {
        if (pl_ckpt.empty()) throw ConfigError("--what pred needs --checkpoint");
        const ModelParams params = load_checkpoint(pl_ckpt);
        check_compatible(params.spec, data);
        if (params.spec.direction == MapDirection::Inverse)
          emit_plot(predict_field(params, s), n, n, pl_out, fmt);
        else
          emit_plot(std::span<const cplx>(predict_pattern(params, s)), m, m, pl_out, fmt);
      } else {
        throw ConfigError("unknown --what '" + pl_what + "' (eta | d | pred)");
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
