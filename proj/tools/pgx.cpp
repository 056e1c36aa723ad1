// pgx: command-line front end over a workspace directory.
//
//   pgx generate preset=citation
//   pgx train --run appnp
//   pgx distill --run mlp-student teacher=appnp student=mlp
//   pgx attribute structure --run appnp
//   pgx serve --run appnp --port 8080
//
// Settings are key=value pairs; --config supplies a file of them and
// positional pairs override the file.

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "pgx/error.hpp"
#include "pgx/pipeline.hpp"
#include "pgx/service.hpp"

namespace {

struct Globals {
    std::string workspace = "workspace";
    std::uint64_t seed = 0;
    std::string config_file;
};

pgx::PipelineContext make_context(const Globals& g, const std::vector<std::string>& overrides) {
    pgx::Config config;
    if (!g.config_file.empty()) config = pgx::Config::load(g.config_file);
    for (const std::string& kv : overrides) config.set_assignment(kv);
    return {pgx::ArtifactStore(g.workspace), std::move(config), g.seed};
}

void warn_unused(const pgx::Config& config, const std::vector<std::string>& overrides) {
    for (const std::string& key : config.unused()) {
        for (const std::string& kv : overrides) {
            if (kv.rfind(key + "=", 0) == 0) {
                std::cerr << "pgx: warning: setting '" << key << "' was not used by this verb\n";
                break;
            }
        }
    }
}

int serve(const Globals& g, const std::string& run, const std::string& host, int port, const std::string& port_file) {
    const pgx::ArtifactStore store(g.workspace);
    const pgx::ExplainService service = pgx::ExplainService::open(store, {run, g.seed});

    // Block termination signals before the server spawns its workers so only
    // the waiter thread below receives them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    pgx::HttpServer server(service);
    const int bound = server.bind(host, port);
    if (!port_file.empty()) {
        std::ofstream(port_file) << bound << "\n";
    }
    std::cerr << "pgx: serving runs/" << pgx::RunId{run, g.seed}.dir_name() << " on http://" << host << ":" << bound
              << "\n";
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.listen();
    // listen() only returns after stop(); wake the waiter if it is still blocked.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train, distill and explain node classifiers"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--workspace", g.workspace, "Workspace directory")->capture_default_str();
    app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--config", g.config_file, "File of key=value settings")->check(CLI::ExistingFile);

    std::vector<std::string> overrides;
    std::string run;
    auto add_settings = [&](CLI::App* cmd) {
        cmd->add_option("settings", overrides, "key=value settings");
    };
    auto add_run = [&](CLI::App* cmd) { cmd->add_option("--run", run, "Run name")->required(); };

    CLI::App* generate = app.add_subcommand("generate", "Write a graph bundle into the workspace");
    add_settings(generate);

    CLI::App* train = app.add_subcommand("train", "Supervised training of a model");
    add_run(train);
    add_settings(train);

    CLI::App* distill = app.add_subcommand("distill", "Offline or online knowledge distillation");
    add_run(distill);
    std::string mode;
    CLI::Option* mode_opt =
        distill->add_option("--mode", mode, "offline (default) or online")->check(CLI::IsMember({"offline", "online"}));
    bool replay = false;
    distill->add_flag("--replay", replay, "Re-run the stored manifest and compare final losses");
    add_settings(distill);

    CLI::App* attribute = app.add_subcommand("attribute", "Component, feature or structure attribution");
    std::string kind;
    attribute->add_option("kind", kind, "component, feature or structure")
        ->required()
        ->check(CLI::IsMember({"component", "feature", "structure"}));
    add_run(attribute);
    add_settings(attribute);

    CLI::App* eval = app.add_subcommand("eval", "Fidelity of a student against its teacher");
    add_run(eval);
    add_settings(eval);

    CLI::App* exp = app.add_subcommand("export", "Text exports of ranks, interaction edges and coordinates");
    add_run(exp);
    add_settings(exp);

    CLI::App* srv = app.add_subcommand("serve", "HTTP explanation API over a structure run");
    add_run(srv);
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string port_file;
    srv->add_option("--host", host)->capture_default_str();
    srv->add_option("--port", port, "0 picks a free port")->capture_default_str();
    srv->add_option("--port-file", port_file, "Write the bound port here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (srv->parsed()) return serve(g, run, host, port, port_file);

        pgx::PipelineContext ctx = make_context(g, overrides);
        nlohmann::json report;
        if (generate->parsed()) {
            report = pgx::run_generate(ctx);
        } else if (train->parsed()) {
            report = pgx::run_train(ctx, run);
        } else if (distill->parsed()) {
            if (replay) {
                report = pgx::run_replay(ctx.store, {run, g.seed});
                std::cout << pgx::dump_report(report);
                return report.at("identical").get<bool>() ? 0 : 3;
            }
            if (mode_opt->count() > 0) ctx.config.set("mode", mode);
            report = pgx::run_distill(ctx, run);
        } else if (attribute->parsed()) {
            report = pgx::run_attribute(ctx, run, pgx::parse_attribution_kind(kind));
        } else if (eval->parsed()) {
            report = pgx::run_eval(ctx, run);
        } else if (exp->parsed()) {
            report = pgx::run_export(ctx, run);
        }
        warn_unused(ctx.config, overrides);
        std::cout << pgx::dump_report(report);
    } catch (const pgx::MissingArtifactsError& e) {
        std::cerr << "pgx: cannot serve; missing artifacts:\n";
        for (const std::string& m : e.missing()) std::cerr << "  " << m << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "pgx: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
