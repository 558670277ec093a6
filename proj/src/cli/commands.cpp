#include "bgm/commands.hpp"

#include "bgm/checkpoint.hpp"
#include "bgm/data.hpp"
#include "bgm/kernels.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

namespace bgm {

namespace {

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw InputError(std::string("missing required setting --") + flag);
}

void apply_kernels(const RunConfig& cfg) {
  if (!cfg.kernels.empty() && !kernels::select(cfg.kernels))
    throw ConfigError("kernels '" + cfg.kernels + "' are not available on this machine");
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const std::filesystem::path p(path);
  if (p.extension() == ".csv" || p.extension() == ".bgm" || p.extension() == ".ckpt")
    return (p.parent_path() / p.stem()).string() + suffix;
  return path + suffix;
}

Checkpoint make_checkpoint(const TrainResult& state, const DataMatrix& data, const RunConfig& cfg) {
  Checkpoint c{state.model, state.latents.z, data.stats, config_to_json(cfg), {}};
  return c;
}

void write_trace(const std::string& path, const TrainingTrace& trace, std::size_t n) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write trace '" + path + "'");
  out << "epoch,objective,grad_sq_z,grad_sq_phi,grad_sq_total,seconds\n";
  for (const TraceRow& r : trace.epochs)
    out << r.epoch << ',' << format_double(r.objective) << ',' << format_double(r.grad_sq_z) << ','
        << format_double(r.grad_sq_phi) << ',' << format_double(r.grad_sq_total(n)) << ','
        << format_double(r.seconds) << '\n';
}

RowMatrix standardize_columns(const RowMatrix& x, std::span<const std::size_t> cols,
                              const ColumnStats& stats) {
  RowMatrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      out(i, jj) = (x(i, jj) - stats.means[cols[j]]) / stats.stds[cols[j]];
    }
  return out;
}

void check_stats(const Checkpoint& ck) {
  const std::size_t p = ck.model.net.output_dim();
  if (ck.stats.means.size() != p || ck.stats.stds.size() != p)
    throw InputError("checkpoint column statistics do not match its output dimension");
}

std::string column_name(const Checkpoint& ck, std::size_t j) {
  return j < ck.stats.names.size() && !ck.stats.names[j].empty() ? ck.stats.names[j]
                                                                 : "x" + std::to_string(j + 1);
}

}  // namespace

int exit_code_for(const std::exception& e, std::ostream& log) {
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const nlohmann::json::exception*>(&e)) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
  log << "error: " << e.what() << '\n';
  return kExitRuntime;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  try {
    require(cfg.data, "data");
    require(cfg.checkpoint, "checkpoint");
    apply_kernels(cfg);
    cfg.train.validate();
    const CsvTable table = read_csv(cfg.data);
    const DataMatrix data = DataMatrix::fit(table.values, table.header);
    const auto n = static_cast<std::size_t>(data.values.rows());
    if (n < cfg.train.batch_size)
      throw InputError("data has " + std::to_string(n) + " rows, fewer than batch_size " +
                       std::to_string(cfg.train.batch_size));
    const std::string trace_path = cfg.trace.empty() ? with_suffix(cfg.checkpoint, ".trace.csv") : cfg.trace;
    log << "training on " << n << " x " << data.values.cols() << " (d_z = "
        << cfg.train.resolved_latent_dim(static_cast<std::size_t>(data.values.cols())) << ", "
        << cfg.train.epochs << " epochs, kernels " << kernels::active().name << ")\n";

    const auto periodic = [&](const TrainResult& state, std::size_t epoch) {
      save_checkpoint(cfg.checkpoint, make_checkpoint(state, data, cfg));
      log << "epoch " << epoch << ": objective " << state.trace.epochs.back().objective << '\n';
    };
    try {
      const TrainResult result = train(data.standardized(), cfg.train, periodic);
      save_checkpoint(cfg.checkpoint, make_checkpoint(result, data, cfg));
      write_trace(trace_path, result.trace, n);
      if (!result.trace.epochs.empty())
        log << "objective " << result.trace.initial.objective << " -> "
            << result.trace.epochs.back().objective << '\n';
      log << "wrote " << cfg.checkpoint << " and " << trace_path << '\n';
      return kExitOk;
    } catch (const TrainingAborted& e) {
      save_checkpoint(cfg.checkpoint, make_checkpoint(e.last_good(), data, cfg));
      write_trace(trace_path, e.last_good().trace, n);
      log << "error: " << e.what() << "\nlast good state saved to " << cfg.checkpoint << '\n';
      return kExitRuntime;
    }
  } catch (const std::exception& e) {
    return exit_code_for(e, log);
  }
}

int cmd_predict(const RunConfig& cfg, std::ostream& log) {
  try {
    require(cfg.checkpoint, "checkpoint");
    require(cfg.data, "data");
    require(cfg.out, "out");
    require(cfg.partition, "partition");
    apply_kernels(cfg);
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    const Checkpoint ck = load_checkpoint(cfg.checkpoint);
    check_stats(ck);
    const std::size_t p = ck.model.net.output_dim();
    const PartitionSpec part = PartitionSpec::parse(cfg.partition, p);
    const CsvTable table = read_csv(cfg.data);
    const auto cols = static_cast<std::size_t>(table.values.cols());
    RowMatrix xa_raw;
    if (cols == part.a_idx.size()) {
      xa_raw = table.values;
    } else if (cols == p) {
      xa_raw.resize(table.values.rows(), static_cast<Eigen::Index>(part.a_idx.size()));
      for (std::size_t j = 0; j < part.a_idx.size(); ++j)
        xa_raw.col(static_cast<Eigen::Index>(j)) = table.values.col(static_cast<Eigen::Index>(part.a_idx[j]));
    } else {
      throw InputError("test data has " + std::to_string(cols) + " columns; expected " +
                       std::to_string(part.a_idx.size()) + " (the A columns) or " + std::to_string(p));
    }
    const RowMatrix xa = standardize_columns(xa_raw, part.a_idx, ck.stats);

    std::vector<std::string> b_names;
    for (std::size_t b : part.b_idx) b_names.push_back(column_name(ck, b));
    DrawsCallback on_draws;
    if (!cfg.draws_out.empty()) {
      std::filesystem::create_directories(cfg.draws_out);
      on_draws = [&](std::size_t row, const PosteriorDraws& d) {
        PosteriorDraws copy = d;
        for (std::size_t j = 0; j < d.b_idx.size(); ++j)
          for (Eigen::Index m = 0; m < copy.xb_draws.rows(); ++m)
            copy.xb_draws(m, static_cast<Eigen::Index>(j)) =
                destandardize_value(d.xb_draws(m, static_cast<Eigen::Index>(j)), d.b_idx[j], ck.stats);
        write_draws_csv((std::filesystem::path(cfg.draws_out) / ("row" + std::to_string(row + 1) + ".csv")).string(),
                        copy, b_names);
      };
    }
    log << "predicting " << xa.rows() << " rows, " << part.b_idx.size() << " target column(s)\n";
    const auto preds = predict_rows(ck.model, part, xa, cfg.inference, cfg.alpha, cfg.train.seed, on_draws);

    std::vector<std::string> header;
    for (const std::string& name : b_names)
      for (const char* s : {"_point", "_lower", "_upper", "_length"}) header.push_back(name + s);
    const std::size_t nb = part.b_idx.size();
    RowMatrix out(static_cast<Eigen::Index>(preds.size()), static_cast<Eigen::Index>(4 * nb));
    double acceptance = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      acceptance += preds[i].acceptance_rate;
      for (std::size_t j = 0; j < nb; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const std::size_t col = part.b_idx[j];
        const double lo = destandardize_value(preds[i].lower[jj], col, ck.stats);
        const double hi = destandardize_value(preds[i].upper[jj], col, ck.stats);
        const auto r = static_cast<Eigen::Index>(i);
        out(r, static_cast<Eigen::Index>(4 * j)) = destandardize_value(preds[i].point[jj], col, ck.stats);
        out(r, static_cast<Eigen::Index>(4 * j + 1)) = lo;
        out(r, static_cast<Eigen::Index>(4 * j + 2)) = hi;
        out(r, static_cast<Eigen::Index>(4 * j + 3)) = hi - lo;
      }
    }
    write_csv(cfg.out, header, out);
    if (!preds.empty())
      log << "mean HMC acceptance " << acceptance / static_cast<double>(preds.size()) << '\n';
    log << "wrote " << cfg.out << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    return exit_code_for(e, log);
  }
}

int cmd_impute(const RunConfig& cfg, std::ostream& log) {
  try {
    require(cfg.checkpoint, "checkpoint");
    require(cfg.data, "data");
    require(cfg.out, "out");
    apply_kernels(cfg);
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    const Checkpoint ck = load_checkpoint(cfg.checkpoint);
    check_stats(ck);
    const std::size_t p = ck.model.net.output_dim();
    const CsvTable table = read_csv(cfg.data, true);
    if (static_cast<std::size_t>(table.values.cols()) != p)
      throw InputError("data has " + std::to_string(table.values.cols()) + " columns, checkpoint expects " +
                       std::to_string(p));
    const RowMatrix xs = standardize(table.values, ck.stats);
    const auto results = impute_rows(ck.model, xs, cfg.inference, cfg.alpha, cfg.train.seed);

    RowMatrix imputed = table.values;
    RowMatrix lengths = RowMatrix::Constant(imputed.rows(), imputed.cols(), std::numeric_limits<double>::quiet_NaN());
    std::size_t cells = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const ImputeResult& r = results[i];
      for (std::size_t j = 0; j < r.missing.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const auto row = static_cast<Eigen::Index>(i);
        const auto col = static_cast<Eigen::Index>(r.missing[j]);
        imputed(row, col) = destandardize_value(r.prediction.point[jj], r.missing[j], ck.stats);
        lengths(row, col) = destandardize_scale(r.prediction.upper[jj] - r.prediction.lower[jj], r.missing[j], ck.stats);
        ++cells;
      }
    }
    const std::string unc = cfg.uncertainty_out.empty() ? with_suffix(cfg.out, ".uncertainty.csv") : cfg.uncertainty_out;
    write_csv(cfg.out, table.header, imputed);
    write_csv(unc, table.header, lengths, true);
    log << "imputed " << cells << " cell(s); wrote " << cfg.out << " and " << unc << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    return exit_code_for(e, log);
  }
}

int cmd_benchmark(const RunConfig& cfg, std::ostream& log) {
  try {
    require(cfg.out, "out");
    apply_kernels(cfg);
    BenchmarkConfig b = cfg.bench;
    b.alpha = cfg.alpha;
    b.train = cfg.train;
    b.inference = cfg.inference;
    b.validate();
    const auto cells = run_benchmark(b, [&](const std::string& msg) { log << msg << std::endl; });
    write_report_csv(cfg.out, cells);
    const std::string summary = cfg.summary.empty() ? with_suffix(cfg.out, ".summary.json") : cfg.summary;
    std::ofstream js(summary);
    if (!js) throw InputError("cannot write summary '" + summary + "'");
    js << summarize_benchmark(b, cells).dump(2) << '\n';
    log << "wrote " << cfg.out << " and " << summary << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    return exit_code_for(e, log);
  }
}

}  // namespace bgm
