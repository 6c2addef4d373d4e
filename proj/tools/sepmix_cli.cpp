#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sepmix/errors.hpp"
#include "sepmix/experiments.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kRuntime = 3;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "sepmix_out";
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--config", opt.config_path, "JSON configuration file");
    cmd->add_option("--seed", opt.seed, "master seed (overrides the configuration)");
    cmd->add_option("--out", opt.out, "output directory")->capture_default_str();
    cmd->add_option("--threads", opt.threads, "worker threads (overrides the configuration)");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sepmix::ValidationError({"cannot read configuration file '" + path + "'"});
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

sepmix::ExperimentConfig load(const CommonOptions& opt, sepmix::ExperimentKind kind, bool kind_fixed) {
    sepmix::ExperimentConfig config =
        opt.config_path.empty() ? sepmix::preset(kind) : sepmix::parse_config(read_file(opt.config_path), kind);
    if (kind_fixed && config.kind != kind)
        throw sepmix::ValidationError({"configuration kind '" + sepmix::to_string(config.kind) +
                                       "' does not match the requested preset '" + sepmix::to_string(kind) + "'"});
    if (opt.seed) config.seed = *opt.seed;
    if (opt.threads) config.threads = *opt.threads;
    sepmix::validate(config);
    return config;
}

void report(const sepmix::ResultBundle& bundle, const std::string& out) {
    std::cout << "wrote " << bundle.files.size() + 1 << " files to " << out << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-species simple exclusion process toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", sepmix::library_version());

    CommonOptions coeff_opt, kmc_opt, pde_opt, exp_opt;
    int dim = 2;
    std::string preset_name;

    auto* coeff = app.add_subcommand("coefficients", "alpha, beta, psi table and self-diffusion approximations");
    add_common(coeff, coeff_opt);
    coeff->add_option("--dim", dim, "lattice dimension (2 or 3)")->capture_default_str();

    auto* kmc = app.add_subcommand("kmc", "KMC realizations with occupancy snapshots");
    add_common(kmc, kmc_opt);

    auto* pde = app.add_subcommand("pde", "cross-diffusion PDE runs for every configured mobility model");
    add_common(pde, pde_opt);

    auto* exp = app.add_subcommand("experiment", "run a figure preset");
    add_common(exp, exp_opt);
    std::string names;
    for (const auto& n : sepmix::experiment_kind_names()) names += (names.empty() ? "" : ", ") + n;
    exp->add_option("preset", preset_name, "one of: " + names)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidation;
    }

    try {
        if (*coeff) {
            auto config = load(coeff_opt, sepmix::ExperimentKind::CoefficientsReport, true);
            if (coeff->count("--dim")) config.dim = dim;
            sepmix::validate(config);
            const auto bundle = sepmix::run_experiment(config, coeff_opt.out);
            const auto& c = bundle.manifest["coefficients"];
            std::cout << "d=" << c["dim"] << " beta=" << c["beta"] << " alpha=" << c["alpha"] << '\n';
            report(bundle, coeff_opt.out);
        } else if (*kmc) {
            const auto config = load(kmc_opt, sepmix::ExperimentKind::Custom, false);
            const auto bundle = sepmix::kmc_snapshot_bundle(config);
            sepmix::emit_results(bundle, kmc_opt.out);
            report(bundle, kmc_opt.out);
        } else if (*pde) {
            const auto config = load(pde_opt, sepmix::ExperimentKind::Custom, false);
            const auto bundle = sepmix::pde_bundle(config);
            sepmix::emit_results(bundle, pde_opt.out);
            report(bundle, pde_opt.out);
        } else if (*exp) {
            const auto kind = sepmix::experiment_kind_from_string(preset_name);
            const auto config = load(exp_opt, kind, true);
            const auto bundle = sepmix::run_experiment(config, exp_opt.out);
            report(bundle, exp_opt.out);
        }
    } catch (const sepmix::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const sepmix::ParseError& e) {
        std::cerr << "error: configuration parse error at byte " << e.offset() << ": " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
