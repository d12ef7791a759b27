// reclab: one subcommand per experiment kind; each run reads a JSON config,
// executes deterministically, writes report.json + CSV series to --out, and
// exits 0 when all declared tolerances pass, 2 on a tolerance failure, 1 on
// any error.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <reclab/harness.hpp>

namespace {

struct PlotStanza {
    const char* file;
    const char* cmd;
};

constexpr PlotStanza kPlots[] = {
    {"samples.csv", "plot 'samples.csv' using 0:3 with points pt 7 ps 0.3 title 'z'"},
    {"variance.csv",
     "plot 'variance.csv' using 1:5 with linespoints title 'sigma2 / cumulative mass'"},
    {"short_returns.csv",
     "plot 'short_returns.csv' using 2:3 with linespoints title 'p_close', \\\n"
     "     'short_returns.csv' using 2:5 with linespoints title 'overlap'"},
    {"counts.csv",
     "plot 'counts.csv' using 1:2 with boxes title 'empirical', \\\n"
     "     'counts.csv' using 1:3 with linespoints title 'model'"},
    {"residuals.csv", "plot 'residuals.csv' using 1:2 with points title 'residual'"},
    {"ulam_matrix.csv", "plot 'ulam_matrix.csv' matrix with image title 'Ulam matrix'"},
};

std::string plot_script(const reclab::RunReport& rep) {
    std::string out = "# generated plot script; run with: gnuplot -p plots.gp\n"
                      "set datafile separator ','\n"
                      "set key top right\n";
    for (const auto& [name, contents] : rep.files) {
        (void)contents;
        for (const auto& stanza : kPlots)
            if (name == stanza.file) {
                out += "\n# ";
                out += name;
                out += "\n";
                out += stanza.cmd;
                out += "\npause -1 'press enter'\n";
            }
    }
    return out;
}

void print_metrics(const reclab::RunReport& rep) {
    for (const auto& m : rep.metrics) {
        std::printf("  %-28s = %.6g", m.name.c_str(), m.value);
        if (m.has_se && m.se == m.se) std::printf("  (se %.3g)", m.se);
        if (m.checked)
            std::printf("  [%s %g]  %s", m.comparison.c_str(), m.tolerance,
                        m.pass ? "pass" : "FAIL");
        std::printf("\n");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"recurrence and shrinking-target statistics on concrete systems"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed_override = 0;
    std::size_t jobs = 0;
    bool plot = false;

    const struct {
        const char* name;
        const char* help;
    } kinds[] = {
        {"clt-recurrence", "self-normed CLT for recurrence hit sums"},
        {"clt-target", "self-normed CLT for shrinking-target hit sums"},
        {"variance-report", "variance growth against cumulative expected mass"},
        {"short-returns", "close-return probabilities and overlap integrals"},
        {"poisson-count", "hit counts at a fixed-mass radius against the Poisson mixture"},
        {"transfer-diagnostics", "Ulam operator spectrum, stationarity, Green-Kubo variance"},
        {"sinai-check", "future-coordinate reduction: exactness and telescoping"},
    };
    for (const auto& k : kinds) {
        auto* sub = app.add_subcommand(k.name, k.help);
        sub->add_option("--config", config_path, "experiment config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (default: config \"out\" or ./reclab-out)");
        sub->add_option("--seed", seed_override, "override the config master seed");
        sub->add_option("--jobs", jobs, "worker threads (env RECLAB_JOBS, default 1)");
        sub->add_flag("--plot", plot, "also emit a gnuplot script referencing the CSVs");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().at(0);

        std::ifstream in(config_path);
        reclab::json raw = reclab::json::parse(in);
        reclab::ExperimentConfig cfg = reclab::config_from_json(raw);
        if (reclab::to_string(cfg.kind) != sub->get_name())
            throw reclab::validation_error("config kind \"" + reclab::to_string(cfg.kind) +
                                           "\" does not match subcommand \"" + sub->get_name() +
                                           "\"");
        if (sub->count("--seed") > 0) cfg.seed = seed_override;
        if (sub->count("--jobs") == 0) {
            if (const char* env = std::getenv("RECLAB_JOBS")) jobs = std::strtoull(env, nullptr, 10);
            if (jobs == 0) jobs = 1;
        }

        const reclab::RunReport report = reclab::run_experiment(cfg, jobs);

        std::string dir = out_dir;
        if (dir.empty()) dir = cfg.out_dir;
        if (dir.empty()) dir = "reclab-out";
        auto written = reclab::write_report(report, dir);
        if (plot) {
            const auto path = std::filesystem::path(dir) / "plots.gp";
            std::ofstream f(path, std::ios::binary | std::ios::trunc);
            f << plot_script(report);
            written.push_back(path);
        }

        std::printf("%s  seed=%llu  jobs=%zu\n", reclab::to_string(cfg.kind).c_str(),
                    static_cast<unsigned long long>(cfg.seed), jobs);
        print_metrics(report);
        for (const auto& p : written) std::printf("  wrote %s\n", p.string().c_str());
        std::fprintf(stderr, "wall time: %.3f s\n", report.wall_seconds);
        if (!report.pass) {
            std::printf("tolerance failure\n");
            return 2;
        }
        std::printf("ok\n");
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
