// Command-line front end for the intensity-estimation library.
//
// Subcommands:
//   simulate          draw a superposed point sample and write it as CSV
//   estimate          evaluate the configured estimator on a simulated sample
//   theory            print asymptotic expansions and optimal bandwidths
//   experiment        run a campaign (bias-variance | rate | op-check | identities)
//   export-plot-data  extract two columns of an experiment CSV as plain x/y data

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "intens/experiment.hpp"

namespace {

intens::ExperimentSetup load_setup(const std::string& config_path,
                                   const std::string& seed_override,
                                   const std::string& threads_override,
                                   const std::string& out_override) {
    intens::ExperimentConfig cfg = intens::ExperimentConfig::load(config_path);
    if (!seed_override.empty()) cfg.set("seed", seed_override);
    if (!threads_override.empty()) cfg.set("threads", threads_override);
    if (!out_override.empty()) cfg.set("out", out_override);
    return intens::build_setup(cfg);
}

int cmd_simulate(const intens::ExperimentSetup& s) {
    const std::size_t n = s.ns.front();
    intens::SuperposedSample sample;
    if (s.pcm.family == intens::PairCorrelationFamily::THOMAS)
        sample = intens::sample_thomas_superposition(s.pcm.parent_intensity,
                                                     s.pcm.offspring_mean, s.pcm.sigma,
                                                     s.model.window(), n, s.seed);
    else
        sample = intens::sample_superposition(s.model, n, s.seed);
    std::ofstream out(s.out + ".csv", std::ios::binary);
    if (!out) {
        std::cerr << "error: cannot open " << s.out << ".csv\n";
        return 1;
    }
    intens::write_csv(out, sample);
    std::cout << "wrote " << sample.total_points() << " points (" << n
              << " replicates) to " << s.out << ".csv\n";
    return 0;
}

int cmd_estimate(const intens::ExperimentSetup& s) {
    const std::size_t n = s.ns.front();
    intens::SuperposedSample sample;
    if (s.pcm.family == intens::PairCorrelationFamily::THOMAS)
        sample = intens::sample_thomas_superposition(s.pcm.parent_intensity,
                                                     s.pcm.offspring_mean, s.pcm.sigma,
                                                     s.model.window(), n, s.seed);
    else
        sample = intens::sample_superposition(s.model, n, s.seed);
    std::cout << "x0_index,h,estimate,lambda_x0\n";
    for (std::size_t xi = 0; xi < s.x0s.size(); ++xi) {
        std::span<const double> xs(s.x0s[xi].data(), s.kernel.d);
        for (double h : s.h_values) {
            intens::EstimateRequest req = intens::detail::make_request(s, s.x0s[xi], h);
            double est = intens::estimate(sample, req);
            std::cout << xi << "," << intens::format_double(h) << ","
                      << intens::format_double(est) << ","
                      << intens::format_double(s.model.intensity_at(xs)) << "\n";
        }
    }
    return 0;
}

int cmd_theory(const intens::ExperimentSetup& s) {
    nlohmann::json j;
    j["kernel"] = {{"d", s.kernel.d}, {"gamma", s.kernel.gamma}};
    intens::KernelMoments m = intens::kernel_moments(s.kernel);
    j["kernel"]["c"] = m.c;
    j["kernel"]["Q"] = m.Q;
    j["kernel"]["V"] = m.V;
    j["kernel"]["V4"] = m.V4;
    if (s.kernel.d >= 2) j["kernel"]["V2"] = m.V2();
    auto points = nlohmann::json::array();
    for (const auto& x0 : s.x0s) {
        std::span<const double> xs(x0.data(), s.kernel.d);
        nlohmann::json p;
        p["x0"] = std::vector<double>(x0.begin(), x0.begin() + s.kernel.d);
        p["lambda"] = s.model.intensity_at(xs);
        p["laplacian"] = s.model.intensity_laplacian(xs);
        p["bias_leading_fixed_per_h2"] =
            intens::bias_leading_fixed(s.model, s.kernel, xs, 1.0);
        for (std::size_t ni = 0; ni < s.ns.size(); ++ni) {
            intens::BandwidthResult bf =
                intens::h_star_fixed(s.model, s.kernel, xs, s.ns[ni]);
            nlohmann::json bj;
            bj["n"] = s.ns[ni];
            bj["degenerate"] = bf.degenerate;
            if (!bf.degenerate) bj["h_star"] = bf.h_star;
            bj["rate_exponent"] = bf.rate_exponent;
            p["h_star_fixed"].push_back(bj);
        }
        if (s.kernel.gamma > 5.0) {
            double A = intens::A_integral(s.model, s.kernel, xs);
            p["A_integral"] = A;
            p["bias_leading_adaptive_per_h4"] = s.model.intensity_at(xs) * A;
            if (s.kernel.d == 1)
                p["A_closed_form"] =
                    intens::A_integral_closed_1d(s.model, xs, s.kernel.gamma);
            if (s.kernel.d == 2)
                p["A_closed_form"] =
                    intens::A_integral_closed_2d(s.model, xs, s.kernel.gamma);
            for (std::size_t ni = 0; ni < s.ns.size(); ++ni) {
                intens::BandwidthResult ba =
                    intens::h_star_adaptive(s.model, s.kernel, xs, s.ns[ni]);
                nlohmann::json bj;
                bj["n"] = s.ns[ni];
                bj["degenerate"] = ba.degenerate;
                if (!ba.degenerate) bj["h_star"] = ba.h_star;
                bj["rate_exponent"] = ba.rate_exponent;
                p["h_star_adaptive"].push_back(bj);
            }
        }
        points.push_back(p);
    }
    j["points"] = points;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_export(const std::string& in, const std::string& xcol, const std::string& ycol,
               const std::string& out_path, bool log_log) {
    std::ifstream fin(in);
    if (!fin) {
        std::cerr << "error: cannot open " << in << "\n";
        return 1;
    }
    std::string header;
    if (!std::getline(fin, header)) {
        std::cerr << "error: empty input\n";
        return 1;
    }
    int xi = -1, yi = -1, idx = 0;
    std::istringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) {
        if (col == xcol) xi = idx;
        if (col == ycol) yi = idx;
        ++idx;
    }
    if (xi < 0 || yi < 0) {
        std::cerr << "error: columns '" << xcol << "' / '" << ycol
                  << "' not found in header: " << header << "\n";
        return 1;
    }
    std::ostream* os = &std::cout;
    std::ofstream fout;
    if (!out_path.empty()) {
        fout.open(out_path, std::ios::binary);
        if (!fout) {
            std::cerr << "error: cannot open " << out_path << "\n";
            return 1;
        }
        os = &fout;
    }
    std::string line;
    while (std::getline(fin, line)) {
        std::istringstream ls(line);
        std::string field, xv, yv;
        idx = 0;
        while (std::getline(ls, field, ',')) {
            if (idx == xi) xv = field;
            if (idx == yi) yv = field;
            ++idx;
        }
        if (xv.empty() || yv.empty()) continue;
        if (log_log) {
            double x = std::stod(xv), y = std::stod(yv);
            if (!(x > 0.0) || !(y > 0.0)) continue;
            *os << intens::format_double(std::log(x)) << " "
                << intens::format_double(std::log(y)) << "\n";
        } else {
            *os << xv << " " << yv << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel intensity estimation for spatial point processes"};
    app.require_subcommand(1);

    std::string config_path, seed_override, threads_override, out_override;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "configuration file")->required();
        sub->add_option("--seed", seed_override, "override the config seed");
        sub->add_option("--threads", threads_override, "override the thread count");
        sub->add_option("--out", out_override, "override the output path prefix");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "draw a point sample as CSV");
    add_common(simulate);
    CLI::App* estimate = app.add_subcommand("estimate", "estimate intensity at x0");
    add_common(estimate);
    CLI::App* theory =
        app.add_subcommand("theory", "print expansions and optimal bandwidths");
    add_common(theory);
    CLI::App* experiment = app.add_subcommand("experiment", "run an experiment campaign");
    add_common(experiment);

    std::string in_csv, xcol = "n", ycol = "h_argmin", export_out;
    bool log_log = false;
    CLI::App* exportcmd =
        app.add_subcommand("export-plot-data", "extract x/y columns from an experiment CSV");
    exportcmd->add_option("-i,--in", in_csv, "input experiment CSV")->required();
    exportcmd->add_option("-x,--x-column", xcol, "x column name");
    exportcmd->add_option("-y,--y-column", ycol, "y column name");
    exportcmd->add_option("-o,--out", export_out, "output file (default stdout)");
    exportcmd->add_flag("--log", log_log, "emit natural logs of both columns");

    CLI11_PARSE(app, argc, argv);

    try {
        if (exportcmd->parsed()) return cmd_export(in_csv, xcol, ycol, export_out, log_log);
        intens::ExperimentSetup setup =
            load_setup(config_path, seed_override, threads_override, out_override);
        if (simulate->parsed()) return cmd_simulate(setup);
        if (estimate->parsed()) return cmd_estimate(setup);
        if (theory->parsed()) return cmd_theory(setup);
        if (experiment->parsed()) {
            nlohmann::json summary = intens::run_experiment(setup);
            std::cout << summary.dump(2) << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
