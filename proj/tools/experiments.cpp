#include "experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "bnn/calibration.hpp"
#include "bnn/checkpoint.hpp"
#include "bnn/csvio.hpp"
#include "bnn/dataset.hpp"
#include "bnn/errors.hpp"
#include "bnn/probe.hpp"
#include "bnn/svg.hpp"
#include "bnn/train.hpp"

namespace fs = std::filesystem;

namespace bnn::cli {

namespace {

std::string find_idx_file(const std::string& dir, const std::string& stem) {
    for (const char* suffix : {"", ".gz"}) {
        const std::string candidate = dir + "/" + stem + suffix;
        if (fs::exists(candidate)) return candidate;
    }
    throw Error("no file " + stem + "[.gz] in data directory " + dir);
}

struct LoadedData {
    DataSplit split;
    std::size_t rows = 0, cols = 0;
};

LoadedData load_data(const Config& cfg) {
    const std::string dir = cfg.get_string("dataset.dir");
    if (!fs::exists(dir)) throw Error("data directory does not exist: " + dir);
    const auto images = load_idx_images(find_idx_file(dir, "train-images-idx3-ubyte"));
    const auto labels = load_idx_labels(find_idx_file(dir, "train-labels-idx1-ubyte"));
    const auto train_n = static_cast<std::size_t>(cfg.get_u64("dataset.train_n", 600));
    const auto val_n = static_cast<std::size_t>(cfg.get_u64("dataset.val_n", 1000));
    const auto seed = cfg.get_u64("dataset.seed", 12345);
    bool covered = true;
    LoadedData data;
    data.split = make_split(images, labels, train_n, val_n, seed, &covered);
    data.rows = images.rows;
    data.cols = images.cols;
    if (!covered)
        std::cerr << "warning: not every class appears in the training split\n";
    return data;
}

TrainConfig train_config(const Config& cfg) {
    TrainConfig tc;
    tc.learning_rate = cfg.get_double("train.lr", 0.001);
    tc.epochs = static_cast<std::size_t>(cfg.get_u64("train.epochs", 20));
    tc.batch_size = static_cast<std::size_t>(cfg.get_u64("train.batch", 100));
    tc.seed = cfg.get_u64("train.seed", 1);
    tc.alpha = cfg.get_double("train.alpha", 0.0);
    tc.mc_samples_train = static_cast<std::size_t>(cfg.get_u64("train.mc_train", 1));
    tc.mc_samples_predict =
        static_cast<std::size_t>(cfg.get_u64("train.mc_predict", 32));
    const std::string mode = cfg.get_string("train.kl_mode", "per_batch");
    if (mode == "per_batch") tc.kl_mode = KlScaleMode::PerBatch;
    else if (mode == "per_example") tc.kl_mode = KlScaleMode::PerExample;
    else throw BadConfig("train.kl_mode must be per_batch or per_example");
    tc.ece_bins = static_cast<std::size_t>(cfg.get_u64("calib.bins", 15));
    return tc;
}

PointNetwork build_arch(const Config& cfg, std::size_t rows, std::size_t cols,
                        double alpha, std::uint64_t seed) {
    Rng rng(seed);
    const std::string kind = cfg.get_string("model.kind", "mlp");
    if (kind == "mlp") {
        const auto hidden = cfg.get_sizes("model.hidden", {64, 64});
        return make_mlp(rows * cols, hidden, 10, alpha, rng);
    }
    if (kind == "conv") {
        const auto ch = cfg.get_sizes("model.channels", {8, 16});
        if (ch.size() != 2) throw BadConfig("model.channels needs two entries");
        return make_convnet(rows, cols, ch[0], ch[1], 10, alpha, rng);
    }
    throw BadConfig("model.kind must be mlp or conv");
}

bool walltime_enabled(const Config& cfg) {
    return cfg.get_u64("output.walltime", 0) != 0;
}

std::string dataset_model_meta(const Config& cfg) {
    return "dataset=" + cfg.get_string("dataset.name", "mnist") +
           ",model=" + cfg.get_string("model.kind", "mlp");
}

void plot_run_curves(const std::string& path, const std::string& title,
                     const std::vector<std::pair<std::string, RunRecord>>& runs,
                     bool ece_curve) {
    LinePlot plot(title, "epoch", ece_curve ? "validation ECE" : "validation accuracy");
    for (const auto& [name, record] : runs) {
        std::vector<double> xs, ys;
        for (const auto& r : record.rows) {
            xs.push_back(static_cast<double>(r.epoch));
            ys.push_back(ece_curve ? r.val_ece : r.val_accuracy);
        }
        plot.add_series(name, std::move(xs), std::move(ys));
    }
    plot.write(path);
}

}  // namespace

int cmd_train(const Config& cfg, const std::string& mode, const std::string& out_dir) {
    if (mode != "map" && mode != "mfvi") {
        std::cerr << "error: mode must be map or mfvi\n";
        return 2;
    }
    const auto data = load_data(cfg);
    TrainConfig tc = train_config(cfg);
    const PointNetwork arch =
        build_arch(cfg, data.rows, data.cols, tc.alpha, tc.seed);
    fs::create_directories(out_dir);

    char tag[64];
    std::snprintf(tag, sizeof(tag), "%s_a%g_s%llu", mode.c_str(), tc.alpha,
                  static_cast<unsigned long long>(tc.seed));
    RunRecord record;
    if (mode == "map") {
        const PointNetwork net = train_map(arch, data.split, tc, record);
        save_point_network(net, out_dir + "/" + tag + ".ckpt");
    } else {
        const VariationalPosterior vp = train_mfvi(arch, data.split, tc, record);
        save_posterior(vp, out_dir + "/" + tag + ".ckpt");
    }
    write_run_csv(out_dir + "/" + tag + "_run.csv", record, walltime_enabled(cfg));
    const auto& last = record.rows.back();
    std::cout << tag << ": final train_nll=" << format_double(last.train_nll)
              << " val_acc=" << format_double(last.val_accuracy)
              << " val_ece=" << format_double(last.val_ece) << "\n";
    return 0;
}

int cmd_probe(const Config& cfg, const std::string& checkpoint,
              const std::string& out_dir) {
    if (!fs::exists(checkpoint)) {
        std::cerr << "error: checkpoint does not exist: " << checkpoint << "\n";
        return 2;
    }
    PointNetwork net = checkpoint_is_posterior(checkpoint)
                           ? mean_network(load_posterior(checkpoint))
                           : load_point_network(checkpoint);
    const auto data = load_data(cfg);
    const Tensor inputs = net.layers.front().kind == LayerKind::Conv
                              ? image_batch_4d(data.split.train_images)
                              : flatten_images(data.split.train_images);
    const auto& labels = data.split.train_labels.labels;

    const auto layer = static_cast<std::size_t>(cfg.get_u64("probe.layer", 1));
    const auto k = static_cast<std::size_t>(cfg.get_u64("probe.k", 20));
    ScanParams params;
    params.n_points = static_cast<std::size_t>(cfg.get_u64("probe.points", 256));
    params.flat_tol = cfg.get_double("probe.flat_tol", 1e-9);
    params.near_frac = cfg.get_double("probe.near_frac", 0.25);
    Rng rng(cfg.get_u64("probe.seed", 99));

    fs::create_directories(out_dir);
    const auto result = survey(net, inputs, labels, layer, k, rng, params);
    write_survey_csv(out_dir + "/survey.csv", result);

    const auto n_profiles = std::min<std::size_t>(
        static_cast<std::size_t>(cfg.get_u64("probe.profiles", 5)),
        result.entries.size());
    for (std::size_t i = 0; i < n_profiles; ++i) {
        const auto& entry = result.entries[i];
        const double w_cur = weight_ref(net, entry.addr);
        const double s = std::max(1.0, std::abs(w_cur));
        double lo = w_cur - params.span * s;
        if (std::isfinite(entry.w_star))
            lo = std::min(lo, entry.w_star - params.w_star_margin);
        const auto scan = scan_profile(net, entry.addr, lo, w_cur + params.span * s,
                                       params.n_points, inputs, labels);
        char name[64];
        std::snprintf(name, sizeof(name), "profile_l%zu_o%zu_i%zu",
                      entry.addr.layer, entry.addr.out_idx, entry.addr.in_idx);
        write_profile_csv(out_dir + "/" + name + ".csv", scan);
        const double mx = *std::max_element(scan.loglik.begin(), scan.loglik.end());
        std::vector<double> lik;
        for (double ll : scan.loglik) lik.push_back(std::exp(ll - mx));
        LinePlot plot(std::string("conditional likelihood ") + name, "w",
                      "likelihood (normalized)");
        plot.add_series("likelihood", scan.grid, lik);
        plot.write(out_dir + "/" + name + ".svg");
    }
    std::cout << "survey: layer=" << layer << " weights=" << k
              << " with_plateau=" << format_double(result.fraction_with_plateau)
              << " near_mode=" << format_double(result.fraction_near_mode) << "\n";
    return 0;
}

int cmd_sweep(const Config& cfg, const std::string& out_dir, std::size_t jobs) {
    const auto slopes = cfg.get_doubles("sweep.slopes", {-0.5, 0.0});
    const auto seeds = cfg.get_u64s("sweep.seeds", {1, 2, 3, 4, 5});
    if (slopes.empty()) {
        std::cerr << "error: sweep.slopes is empty\n";
        return 2;
    }
    for (double a : slopes)
        if (a < -1.0 || a > 1.0) {
            std::cerr << "error: slope " << a << " outside [-1, 1]\n";
            return 2;
        }
    const auto data = load_data(cfg);
    const TrainConfig base = train_config(cfg);

    struct Trial {
        double slope;
        std::uint64_t seed;
    };
    std::vector<Trial> trials;
    for (double a : slopes)
        for (auto s : seeds) trials.push_back({a, s});
    std::vector<SweepRow> rows(trials.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= trials.size()) return;
            SweepRow row;
            row.slope = trials[i].slope;
            row.seed = trials[i].seed;
            try {
                TrainConfig tc = base;
                tc.alpha = trials[i].slope;
                tc.seed = trials[i].seed;
                const PointNetwork arch =
                    build_arch(cfg, data.rows, data.cols, tc.alpha, tc.seed);
                RunRecord record;
                train_mfvi(arch, data.split, tc, record);
                row.val_accuracy = record.rows.back().val_accuracy;
                row.val_ece = record.rows.back().val_ece;
                row.wall_seconds = record.rows.back().wall_seconds;
            } catch (const std::exception& e) {
                // a failed trial is recorded, never aborts the sweep
                row.failed = true;
                std::cerr << "trial slope=" << row.slope << " seed=" << row.seed
                          << " failed: " << e.what() << "\n";
            }
            rows[i] = row;
        }
    };
    const std::size_t n_workers =
        std::max<std::size_t>(1, std::min(jobs, trials.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    fs::create_directories(out_dir);
    write_sweep_csv(out_dir + "/sweep.csv", rows, walltime_enabled(cfg),
                    dataset_model_meta(cfg));

    // per-slope aggregates: mean with min/max range over seeds
    std::vector<double> mean_ece, lo_ece, hi_ece, mean_acc, lo_acc, hi_acc, xs;
    for (double a : slopes) {
        double se = 0, sa = 0, le = 1e300, he = -1e300, la = 1e300, ha = -1e300;
        std::size_t n = 0;
        for (const auto& r : rows)
            if (!r.failed && r.slope == a) {
                se += r.val_ece;
                sa += r.val_accuracy;
                le = std::min(le, r.val_ece);
                he = std::max(he, r.val_ece);
                la = std::min(la, r.val_accuracy);
                ha = std::max(ha, r.val_accuracy);
                ++n;
            }
        if (!n) continue;
        xs.push_back(a);
        mean_ece.push_back(se / n);
        lo_ece.push_back(le);
        hi_ece.push_back(he);
        mean_acc.push_back(sa / n);
        lo_acc.push_back(la);
        hi_acc.push_back(ha);
    }
    LinePlot ece_plot("ECE vs negative slope", "slope", "validation ECE");
    ece_plot.add_series("mean", xs, mean_ece);
    ece_plot.add_series("min", xs, lo_ece);
    ece_plot.add_series("max", xs, hi_ece);
    ece_plot.write(out_dir + "/sweep_ece.svg");
    LinePlot acc_plot("accuracy vs negative slope", "slope", "validation accuracy");
    acc_plot.add_series("mean", xs, mean_acc);
    acc_plot.add_series("min", xs, lo_acc);
    acc_plot.add_series("max", xs, hi_acc);
    acc_plot.write(out_dir + "/sweep_acc.svg");

    for (std::size_t i = 0; i < xs.size(); ++i)
        std::cout << "slope=" << format_double(xs[i])
                  << " mean_acc=" << format_double(mean_acc[i])
                  << " mean_ece=" << format_double(mean_ece[i]) << "\n";
    return 0;
}

int cmd_decal(const Config& cfg, const std::string& out_dir) {
    const auto alphas = cfg.get_doubles("decal.alphas", {0.0, -0.5});
    const auto data = load_data(cfg);
    const TrainConfig base = train_config(cfg);

    std::vector<std::pair<std::string, RunRecord>> runs;
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir + "/decal.csv");
    if (!csv) throw Error("cannot write " + out_dir + "/decal.csv");
    csv << "# schema=bnn.decal.v1\n";
    csv << "alpha,epoch,val_accuracy,val_ece\n";
    for (double a : alphas) {
        TrainConfig tc = base;
        tc.alpha = a;
        const PointNetwork arch =
            build_arch(cfg, data.rows, data.cols, tc.alpha, tc.seed);
        RunRecord record;
        train_mfvi(arch, data.split, tc, record);
        for (const auto& r : record.rows)
            csv << format_double(a) << ',' << r.epoch << ','
                << format_double(r.val_accuracy) << ','
                << format_double(r.val_ece) << "\n";
        // decalibration gap: late-training ECE minus the ECE minimum
        double min_ece = 1.0;
        for (const auto& r : record.rows) min_ece = std::min(min_ece, r.val_ece);
        const double gap = record.rows.back().val_ece - min_ece;
        std::cout << "alpha=" << format_double(a)
                  << " final_ece=" << format_double(record.rows.back().val_ece)
                  << " decalibration_gap=" << format_double(gap) << "\n";
        char name[32];
        std::snprintf(name, sizeof(name), "alpha=%g", a);
        runs.emplace_back(name, std::move(record));
    }
    plot_run_curves(out_dir + "/decal_ece.svg", "validation ECE during training",
                    runs, true);
    plot_run_curves(out_dir + "/decal_acc.svg",
                    "validation accuracy during training", runs, false);
    return 0;
}

int cmd_report(const std::vector<std::string>& sweep_csvs,
               const std::string& out_dir) {
    if (sweep_csvs.empty()) {
        std::cerr << "error: report needs at least one sweep CSV\n";
        return 2;
    }
    struct Cell {
        double acc_leaky = std::nan(""), acc_relu = std::nan("");
        double ece_leaky = std::nan(""), ece_relu = std::nan("");
    };
    std::map<std::string, Cell> table;
    for (const auto& path : sweep_csvs) {
        std::string meta;
        const auto rows = read_sweep_csv(path, &meta);
        std::string key = meta.empty() ? path : meta;
        auto mean_for = [&](double slope, bool ece_col, double* out) {
            double sum = 0;
            std::size_t n = 0;
            for (const auto& r : rows)
                if (!r.failed && r.slope == slope) {
                    sum += ece_col ? r.val_ece : r.val_accuracy;
                    ++n;
                }
            if (n) *out = sum / static_cast<double>(n);
        };
        Cell& cell = table[key];
        mean_for(-0.5, false, &cell.acc_leaky);
        mean_for(0.0, false, &cell.acc_relu);
        mean_for(-0.5, true, &cell.ece_leaky);
        mean_for(0.0, true, &cell.ece_relu);
    }
    fs::create_directories(out_dir);
    std::ofstream out(out_dir + "/report.csv");
    out << "# schema=bnn.report.v1\n";
    out << "config,acc_leaky,acc_relu,ece_leaky,ece_relu\n";
    std::printf("%-34s %10s %10s %10s %10s\n", "config", "acc(L)", "acc(R)",
                "ece(L)", "ece(R)");
    for (const auto& [key, c] : table) {
        std::printf("%-34s %10.4f %10.4f %10.4f %10.4f\n", key.c_str(),
                    c.acc_leaky, c.acc_relu, c.ece_leaky, c.ece_relu);
        out << key << ',' << format_double(c.acc_leaky) << ','
            << format_double(c.acc_relu) << ',' << format_double(c.ece_leaky)
            << ',' << format_double(c.ece_relu) << "\n";
    }
    return 0;
}

}  // namespace bnn::cli
