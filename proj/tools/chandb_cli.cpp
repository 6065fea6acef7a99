// SPDX-License-Identifier: Apache-2.0
//
// chandb: channel database construction and interpolation
// Copyright (C) 2026 The chandb authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "chandb/field_synth.hpp"
#include "chandb/gp_model.hpp"
#include "chandb/grid.hpp"
#include "chandb/grid_io.hpp"
#include "chandb/key_value.hpp"
#include "chandb/knn.hpp"
#include "chandb/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace chandb;

namespace {

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

std::string shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Fills every option of `app` that was not given on the command line from the
// key=value file named by its --config option.
void apply_config(CLI::App* app, const std::string& path) {
    if (path.empty()) {
        return;
    }
    for (const auto& [key, value] : read_key_values(path)) {
        if (key == "config") {
            throw std::runtime_error("config files cannot include other config files");
        }
        CLI::Option* opt = nullptr;
        try {
            opt = app->get_option("--" + key);
        } catch (const CLI::OptionNotFound&) {
            throw std::runtime_error("config " + path + ": unknown key '" + key + "' for '" + app->get_name() + "'");
        }
        if (opt->count() == 0) {
            opt->add_result(value);
            opt->run_callback();
        }
    }
}

// ---------------------------------------------------------------------------
// Shared option groups

struct GridInput {
    std::string samples;
    std::string values;
    std::string mask;
    double x1_min = kUnset;
    double x1_max = kUnset;
    double x2_min = kUnset;
    double x2_max = kUnset;
    double q = 0.5;

    void add(CLI::App* app) {
        app->add_option("--samples", samples, "Sample CSV (x1,x2,gain_db)");
        app->add_option("--grid", values, "Grid values CSV");
        app->add_option("--mask", mask, "Grid mask CSV (0/1)");
        app->add_option("--x1-min", x1_min, "Grid bounding box [m]");
        app->add_option("--x1-max", x1_max);
        app->add_option("--x2-min", x2_min);
        app->add_option("--x2-max", x2_max);
        app->add_option("--q", q, "Grid resolution [m]")->capture_default_str();
    }

    ChannelGrid load() const {
        if (!samples.empty()) {
            const auto s = io::read_samples(samples);
            if (s.empty()) {
                throw std::runtime_error(samples + ": no samples");
            }
            const auto pick = [&](double given, auto proj, bool lo) {
                if (!std::isnan(given)) {
                    return given;
                }
                const auto [mn, mx] = std::minmax_element(s.begin(), s.end(), [&](const Sample& a, const Sample& b) {
                    return proj(a) < proj(b);
                });
                return lo ? proj(*mn) : proj(*mx);
            };
            const auto px1 = [](const Sample& a) { return a.x1; };
            const auto px2 = [](const Sample& a) { return a.x2; };
            const GridSpec spec(pick(x1_min, px1, true), pick(x1_max, px1, false), pick(x2_min, px2, true),
                                pick(x2_max, px2, false), q);
            return build_grid(spec, s);
        }
        if (values.empty() || mask.empty()) {
            throw std::runtime_error("need --samples, or --grid together with --mask");
        }
        const Matrix v = io::read_matrix(values);
        const double a = std::isnan(x1_min) ? 0.0 : x1_min;
        const double b = std::isnan(x2_min) ? 0.0 : x2_min;
        const GridSpec spec(a, a + static_cast<double>(v.rows() - 1) * q, b, b + static_cast<double>(v.cols() - 1) * q, q);
        return io::read_grid(values, mask, spec);
    }
};

struct BsInput {
    double row = kUnset;
    double col = kUnset;

    void add(CLI::App* app) {
        app->add_option("--bs-row", row, "Base station row [cells]; default grid centre");
        app->add_option("--bs-col", col, "Base station column [cells]; default grid centre");
    }

    BsPosition resolve(Index rows, Index cols) const {
        return {std::isnan(row) ? 0.5 * static_cast<double>(rows - 1) : row,
                std::isnan(col) ? 0.5 * static_cast<double>(cols - 1) : col};
    }
};

struct GpInput {
    Index n_range = 4;
    double d_min = 1.0;
    double d_max = 50.0;
    double d_step = 1.0;
    double shadow_fraction = kUnset;
    std::string params;

    void add(CLI::App* app) {
        app->add_option("--n-range", n_range, "Neighborhood half-width [cells]")->capture_default_str();
        app->add_option("--d-min", d_min, "Correlation distance search start [cells]")->capture_default_str();
        app->add_option("--d-max", d_max, "Correlation distance search end [cells]")->capture_default_str();
        app->add_option("--d-step", d_step, "Correlation distance search step [cells]")->capture_default_str();
        app->add_option("--shadow-fraction", shadow_fraction, "sigma_psi^2 / total variance (default 1)");
    }

    void add_params(CLI::App* app) {
        app->add_option("--params", params, "Parameter report from `fit`; fitted on the fly when absent");
    }

    std::optional<double> fraction() const {
        return std::isnan(shadow_fraction) ? std::nullopt : std::optional<double>(shadow_fraction);
    }

    D0Search search() const { return {d_min, d_max, d_step}; }

    std::optional<GpParams> fixed() const {
        if (params.empty()) {
            return std::nullopt;
        }
        const auto kv = read_key_values(params);
        const auto get = [&](const std::string& k) {
            const auto it = kv.find(k);
            if (it == kv.end()) {
                throw std::runtime_error(params + ": missing '" + k + "'");
            }
            return std::stod(it->second);
        };
        GpParams p{get("g0"), get("eta"), get("d0"), get("total-var"), std::nullopt};
        if (const auto it = kv.find("sigma-psi-sq"); it != kv.end()) {
            p.sigma_psi_sq = std::stod(it->second);
        } else if (fraction()) {
            p.sigma_psi_sq = *fraction() * p.total_var;
        }
        p.validate();
        return p;
    }
};

struct KnnInput {
    int k = 5;
    std::string weighting = "distance";

    void add(CLI::App* app) {
        app->add_option("--k", k, "Number of neighbors")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--weighting", weighting, "uniform | distance")->capture_default_str();
    }

    KnnConfig config() const { return {k, parse_weighting(weighting)}; }
};

struct TrainInput {
    std::string structure = "9-1-5(64-32-1)";
    int iterations = 200000;
    double lr = 1e-4;
    double split = 0.8;
    int log_every = 100;
    bool no_final_relu = false;

    void add(CLI::App* app) {
        app->add_option("--structure", structure, "Network structure, e.g. 9-1-5(64-32-1)")->capture_default_str();
        app->add_option("--iterations", iterations, "Adam iterations")->capture_default_str();
        app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        app->add_option("--split", split, "Fraction of valid cells used as network input")->capture_default_str();
        app->add_option("--log-every", log_every, "Loss log interval")->capture_default_str();
        app->add_flag("--no-final-relu", no_final_relu, "Drop the ReLU after the last layer");
    }

    TrainConfig config() const {
        TrainConfig c;
        c.iterations = iterations;
        c.adam.learning_rate = lr;
        c.split_fraction = split;
        c.log_every = log_every;
        c.final_relu = !no_final_relu;
        return c;
    }
};

void write_loss_log(const std::string& path, const std::vector<LossLogEntry>& log) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << "iteration,label_rmse_db\n";
    for (const auto& e : log) {
        out << e.iteration << ',' << shortest(e.label_rmse_db) << '\n';
    }
}

// Observed grid, truth and evaluation cells: either a benchmark instance or files.
struct DataInput {
    GridInput grid;
    BsInput bs;
    bool benchmark = false;
    std::uint64_t instance = 1;
    std::string truth;
    std::string eval_mask;

    void add(CLI::App* app) {
        grid.add(app);
        bs.add(app);
        app->add_flag("--benchmark", benchmark, "Use the built-in 80x80 synthetic benchmark");
        app->add_option("--instance", instance, "Benchmark instance seed")->capture_default_str();
        app->add_option("--truth", truth, "Ground-truth values CSV");
        app->add_option("--eval-mask", eval_mask, "Cells to score (default: every invalid cell)");
    }

    ExperimentData load() const {
        if (benchmark) {
            return BenchmarkFactory(reference_benchmark()).instance(instance);
        }
        if (truth.empty()) {
            throw std::runtime_error("need --benchmark or --truth");
        }
        ChannelGrid observed = grid.load();
        Matrix t = io::read_matrix(truth);
        if (t.rows() != observed.rows() || t.cols() != observed.cols()) {
            throw std::runtime_error("--truth does not match the grid shape");
        }
        Mask e = eval_mask.empty() ? Mask((observed.mask.array() == 0).cast<std::uint8_t>()) : io::read_mask(eval_mask);
        const BsPosition p = bs.resolve(observed.rows(), observed.cols());
        return ExperimentData{std::move(observed), std::move(t), std::move(e), p};
    }
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    int depth = 0;
    for (const char c : s) {
        depth += c == '(' ? 1 : c == ')' ? -1 : 0;
        if ((c == ',' || c == ';') && depth == 0) {
            if (!item.empty()) {
                out.push_back(item);
            }
            item.clear();
        } else if (c != ' ') {
            item.push_back(c);
        }
    }
    if (!item.empty()) {
        out.push_back(item);
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Channel database construction and interpolation"};
    app.require_subcommand(1);

    // synth ------------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate a synthetic channel field and sampled subset");
    std::string synth_cfg;
    FieldParams field;
    BsInput synth_bs;
    Index rows = 80;
    Index cols = 80;
    double synth_q = 0.5;
    std::uint64_t synth_seed = 1;
    bool tiled = false;
    ShadowingOptions shadow;
    std::string truth_out;
    std::string samples_out;
    std::string observed_out;
    std::string mask_out;
    std::string pgm_out;
    double keep_fraction = 0.5;
    std::uint64_t sample_seed = 0;
    synth->add_option("--config", synth_cfg, "key=value file; command-line flags take precedence");
    synth->add_option("--rows", rows)->capture_default_str();
    synth->add_option("--cols", cols)->capture_default_str();
    synth->add_option("--q", synth_q, "Grid resolution [m]")->capture_default_str();
    synth->add_option("--g0", field.g0, "Antenna-gain constant [dB]")->capture_default_str();
    synth->add_option("--eta", field.eta, "Path-loss exponent")->capture_default_str();
    synth->add_option("--d0", field.d0, "Shadowing correlation distance [cells]")->capture_default_str();
    synth->add_option("--sigma-psi", field.sigma_psi, "Shadowing std [dB]")->capture_default_str();
    synth->add_option("--sigma-zeta", field.sigma_zeta, "Non-shadowing fading std [dB]")->capture_default_str();
    synth_bs.add(synth);
    synth->add_option("--seed", synth_seed, "Field seed")->capture_default_str();
    synth->add_flag("--tiled", tiled, "Tiled shadowing draw for grids above the dense limit");
    synth->add_option("--tile-size", shadow.tile_size)->capture_default_str();
    synth->add_option("--halo-factor", shadow.halo_factor)->capture_default_str();
    synth->add_option("--out", truth_out, "Ground-truth values CSV")->required();
    synth->add_option("--samples-out", samples_out, "Sampled subset as sample CSV");
    synth->add_option("--grid-out", observed_out, "Sampled subset as grid values CSV");
    synth->add_option("--mask-out", mask_out, "Mask CSV of the sampled subset");
    synth->add_option("--keep-fraction", keep_fraction, "Fraction of cells sampled")->capture_default_str();
    synth->add_option("--sample-seed", sample_seed, "Sampling seed (default derived from --seed)");
    synth->add_option("--pgm", pgm_out, "16-bit PGM heatmap of the ground truth");

    // fit --------------------------------------------------------------------
    auto* fit = app.add_subcommand("fit", "Fit path-loss and correlation parameters");
    std::string fit_cfg;
    GridInput fit_grid;
    BsInput fit_bs;
    GpInput fit_gp_in;
    std::string fit_out;
    fit->add_option("--config", fit_cfg, "key=value file; command-line flags take precedence");
    fit_grid.add(fit);
    fit_bs.add(fit);
    fit_gp_in.add(fit);
    fit->add_option("--out", fit_out, "Parameter report (default stdout)");

    // interpolate ------------------------------------------------------------
    auto* interp = app.add_subcommand("interpolate", "Complete a channel database");
    std::string interp_cfg;
    GridInput interp_grid;
    BsInput interp_bs;
    GpInput interp_gp;
    KnnInput interp_knn;
    std::string interp_method = "knn";
    std::string interp_model;
    std::string interp_out;
    std::string interp_mse;
    std::string interp_pgm;
    interp->add_option("--config", interp_cfg, "key=value file; command-line flags take precedence");
    interp_grid.add(interp);
    interp_bs.add(interp);
    interp_gp.add(interp);
    interp_gp.add_params(interp);
    interp_knn.add(interp);
    interp->add_option("--method", interp_method, "gp | knn | two-step")->capture_default_str();
    interp->add_option("--model", interp_model, "Trained network (two-step)");
    interp->add_option("--out", interp_out, "Completed grid CSV")->required();
    interp->add_option("--mse-out", interp_mse, "Predicted MSE per cell (gp)");
    interp->add_option("--pgm", interp_pgm, "16-bit PGM heatmap of the completed grid");

    // train ------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train the refinement network");
    std::string train_cfg;
    GridInput train_grid;
    KnnInput train_knn;
    TrainInput train_in;
    std::uint64_t train_seed = 1;
    std::string loss_log;
    std::string model_out;
    train->add_option("--config", train_cfg, "key=value file; command-line flags take precedence");
    train_grid.add(train);
    train_knn.add(train);
    train_in.add(train);
    train->add_option("--seed", train_seed, "Split and initialization seed")->capture_default_str();
    train->add_option("--loss-log", loss_log, "Loss log CSV (iteration, label RMSE in dB)");
    train->add_option("--model", model_out, "Output model file")->required();

    // eval / sweep share their inputs -----------------------------------------
    auto* eval = app.add_subcommand("eval", "Score one method against ground truth");
    auto* sweep_cmd = app.add_subcommand("sweep", "Score several methods and network structures");
    struct RunInput {
        std::string cfg;
        DataInput data;
        GpInput gp;
        KnnInput knn;
        TrainInput train;
        std::uint64_t seed = 1;
        std::string out;
        std::string loss_log;
        int mlp_iterations = 20000;
    };
    RunInput ev;
    RunInput sw;
    std::string eval_method = "two-step";
    std::string sweep_structures;
    std::string sweep_methods;
    std::string sweep_reference = "9-1-5(64-32-1)";
    for (auto [cmd, in] : {std::pair{eval, &ev}, std::pair{sweep_cmd, &sw}}) {
        cmd->add_option("--config", in->cfg, "key=value file; command-line flags take precedence");
        in->data.add(cmd);
        in->gp.add(cmd);
        in->gp.add_params(cmd);
        in->knn.add(cmd);
        in->train.add(cmd);
        cmd->add_option("--seed", in->seed, "Method seed")->capture_default_str();
        cmd->add_option("--mlp-iterations", in->mlp_iterations, "Iterations of the coordinate network")
            ->capture_default_str();
        cmd->add_option("--out", in->out, "Result CSV (default stdout)");
    }
    eval->add_option("--method", eval_method, "gp | knn-uniform | knn-distance | two-step | fullnn-baseline")
        ->capture_default_str();
    eval->add_option("--loss-log", ev.loss_log, "Loss log CSV (two-step)");
    sweep_cmd->add_option("--structures", sweep_structures, "Comma-separated structures (default: full sweep)");
    sweep_cmd->add_option("--methods", sweep_methods, "Additional non-network methods, comma-separated");
    sweep_cmd->add_option("--reference", sweep_reference, "Structure used to normalize runtimes")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            apply_config(synth, synth_cfg);
            const GridSpec spec = GridSpec::from_shape(rows, cols, synth_q);
            field.bs = synth_bs.resolve(rows, cols);
            shadow.tiled = tiled;
            const Matrix truth = synth_field(field, spec, synth_seed, shadow);
            io::write_matrix(truth_out, truth);
            if (!pgm_out.empty()) {
                io::write_pgm16(pgm_out, truth, Mask::Ones(rows, cols));
            }
            if (!samples_out.empty() || !observed_out.empty() || !mask_out.empty()) {
                const auto count = static_cast<Index>(std::llround(keep_fraction * static_cast<double>(spec.cells())));
                const std::uint64_t s = sample_seed != 0 ? sample_seed : derive_seed(synth_seed, 1);
                const Mask m = random_cells(rows, cols, count, s);
                const ChannelGrid observed = masked_grid(spec, truth, m);
                if (!samples_out.empty()) {
                    std::vector<Sample> samples;
                    for (const Cell c : valid_cells(m)) {
                        const auto [x1, x2] = spec.cell_center(c);
                        samples.push_back({x1, x2, truth(c.row, c.col)});
                    }
                    io::write_samples(samples_out, samples);
                }
                if (!observed_out.empty()) {
                    io::write_matrix(observed_out, observed.values);
                }
                if (!mask_out.empty()) {
                    io::write_mask(mask_out, observed.mask);
                }
            }
        } else if (fit->parsed()) {
            apply_config(fit, fit_cfg);
            const ChannelGrid grid = fit_grid.load();
            const BsPosition bs = fit_bs.resolve(grid.rows(), grid.cols());
            const GpParams p = fit_gp(grid, bs, {fit_gp_in.n_range}, fit_gp_in.search(), fit_gp_in.fraction());
            std::ostringstream report;
            report << "g0=" << shortest(p.g0) << "\neta=" << shortest(p.eta) << "\nd0=" << shortest(p.d0)
                   << "\ntotal_var=" << shortest(p.total_var) << '\n';
            if (p.sigma_psi_sq) {
                report << "sigma_psi_sq=" << shortest(*p.sigma_psi_sq) << '\n';
            }
            if (fit_out.empty()) {
                std::cout << report.str();
            } else {
                std::ofstream(fit_out) << report.str();
            }
        } else if (interp->parsed()) {
            apply_config(interp, interp_cfg);
            const ChannelGrid grid = interp_grid.load();
            const BsPosition bs = interp_bs.resolve(grid.rows(), grid.cols());
            Matrix filled;
            if (interp_method == "gp") {
                const Neighborhood nbhd{interp_gp.n_range};
                const GpParams p = interp_gp.fixed().value_or(
                    [&] { return fit_gp(grid, bs, nbhd, interp_gp.search(), interp_gp.fraction()); }());
                const auto r = gp_interpolate(grid, p, bs, nbhd);
                filled = r.grid.values;
                if (!interp_mse.empty()) {
                    io::write_matrix(interp_mse, r.mse);
                }
                const Index n_fallback = count_valid(r.fallback);
                if (n_fallback > 0) {
                    std::cerr << n_fallback << " cells had no valid neighbor and use the path-loss mean\n";
                }
            } else if (interp_method == "knn" || interp_method == "knn-uniform" || interp_method == "knn-distance") {
                KnnConfig cfg = interp_knn.config();
                if (interp_method != "knn") {
                    cfg.weighting = interp_method == "knn-uniform" ? Weighting::uniform : Weighting::inverse_distance;
                }
                filled = knn_fill(grid, cfg).values;
            } else if (interp_method == "two-step") {
                if (interp_model.empty()) {
                    throw std::runtime_error("--method two-step needs --model");
                }
                filled = two_step_interpolate(grid, load_model(interp_model), interp_knn.config()).values;
            } else {
                throw std::runtime_error("unknown method '" + interp_method + "'");
            }
            io::write_matrix(interp_out, filled);
            if (!interp_pgm.empty()) {
                io::write_pgm16(interp_pgm, filled, Mask::Ones(filled.rows(), filled.cols()));
            }
        } else if (train->parsed()) {
            apply_config(train, train_cfg);
            const ChannelGrid grid = train_grid.load();
            const auto model = two_step_train(grid, train_knn.config(), NetStructure::parse(train_in.structure),
                                              train_in.config(), train_seed);
            save_model(model_out, model.net);
            if (!loss_log.empty()) {
                write_loss_log(loss_log, model.log);
            }
            std::cout << "final label RMSE " << model.log.back().label_rmse_db << " dB after "
                      << model.log.back().iteration << " iterations (" << model.train_seconds << " s)\n";
        } else {
            const bool is_eval = eval->parsed();
            RunInput& in = is_eval ? ev : sw;
            apply_config(is_eval ? eval : sweep_cmd, in.cfg);
            const ExperimentData data = in.data.load();
            ExperimentConfig base;
            base.knn = in.knn.config();
            base.train = in.train.config();
            base.nbhd = {in.gp.n_range};
            base.d0_search = in.gp.search();
            base.shadow_fraction = in.gp.fraction();
            base.gp_params = in.gp.fixed();
            base.mlp.iterations = in.mlp_iterations;
            base.seed = in.seed;
            base.structure = NetStructure::parse(in.train.structure);

            std::vector<ExperimentConfig> configs;
            if (is_eval) {
                base.method = parse_method(eval_method);
                configs.push_back(base);
            } else {
                std::vector<NetStructure> structures;
                if (sweep_structures.empty()) {
                    structures = default_sweep_structures();
                } else {
                    for (const auto& s : split_list(sweep_structures)) {
                        structures.push_back(NetStructure::parse(s));
                    }
                }
                for (const auto& s : structures) {
                    ExperimentConfig c = base;
                    c.method = Method::two_step;
                    c.structure = s;
                    configs.push_back(c);
                }
                for (const auto& m : split_list(sweep_methods)) {
                    ExperimentConfig c = base;
                    c.method = parse_method(m);
                    configs.push_back(c);
                }
            }
            const auto reports = sweep(configs, data, is_eval ? std::string_view(in.train.structure) : sweep_reference);
            if (in.out.empty()) {
                write_report_csv(std::cout, reports);
            } else {
                std::ofstream f(in.out);
                if (!f) {
                    throw std::runtime_error("cannot write " + in.out);
                }
                write_report_csv(f, reports);
            }
            write_summary(in.out.empty() ? std::cerr : std::cout, reports);
            if (!in.loss_log.empty() && !reports.front().loss_log.empty()) {
                write_loss_log(in.loss_log, reports.front().loss_log);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
