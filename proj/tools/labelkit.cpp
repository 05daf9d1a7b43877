#include "labelkit/api.hpp"
#include "labelkit/error.hpp"
#include "labelkit/eval.hpp"
#include "labelkit/fsutil.hpp"
#include "labelkit/service.hpp"
#include "labelkit/synthetic.hpp"

#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <fmt/core.h>
#include <numeric>
#include <pthread.h>
#include <spdlog/spdlog.h>
#include <thread>

using namespace labelkit;

namespace {

struct ServeOptions {
    std::string config;
    std::string data_root;
    std::string host;
    int port = -1;
    std::string embeddings;
};

int serve(const ServeOptions& opt) {
    // Block termination signals before any thread starts so only the waiter sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    auto cfg = service::load_service_config(opt.config.empty() ? std::nullopt
                                                               : std::optional<std::filesystem::path>(opt.config));
    if (!opt.data_root.empty()) cfg.data_root = opt.data_root;
    if (!opt.host.empty()) cfg.host = opt.host;
    if (opt.port >= 0) cfg.port = opt.port;
    if (!opt.embeddings.empty()) cfg.embeddings_path = opt.embeddings;

    auto app = std::make_shared<service::Application>(cfg);
    service::HttpServer server(app);
    const int port = server.bind(cfg.host, cfg.port);
    spdlog::info("serving {} on http://{}:{}", cfg.data_root.string(), cfg.host, port);

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        spdlog::info("signal {} received, shutting down", sig);
        server.stop();
    });
    server.run();
    if (waiter.joinable()) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
    }
    return 0;
}

struct SimulateOptions {
    std::string corpus;
    std::string gold_column = "gold";
    std::string query;
    std::size_t iterations = 6;
    std::size_t batch = 30;
    std::size_t seed_target = 30;
    std::string schedule = "light:0-";
    std::string strategy = "uncertainty";
    std::size_t seeds = 5;
    std::string out;
    std::string summary;
    std::string embeddings;
    double negative_ratio = 2.0;
    double lambda = 0.0;
    int epochs = 10;
};

int simulate(const SimulateOptions& opt) {
    auto gold = eval::load_gold_corpus(fsutil::read_file(opt.corpus), opt.gold_column,
                                       std::filesystem::path(opt.corpus).stem().string());
    std::shared_ptr<const learning::EmbeddingTable> table;
    if (!opt.embeddings.empty()) {
        table = std::make_shared<const learning::EmbeddingTable>(learning::EmbeddingTable::load(opt.embeddings));
    }
    learning::SvmHyper hyper;
    hyper.lambda = opt.lambda;
    hyper.epochs = opt.epochs;

    eval::SimulationConfig cfg;
    cfg.corpus = gold.dataset;
    cfg.gold = gold.gold;
    cfg.seed_query = corpus::parse_query(opt.query);
    cfg.seed_positive_target = opt.seed_target;
    cfg.batch_size = opt.batch;
    cfg.iterations = opt.iterations;
    cfg.model_schedule = policy::parse_schedule(opt.schedule);
    cfg.al_strategy = policy::parse_strategy(opt.strategy);
    cfg.seeds.resize(opt.seeds);
    std::iota(cfg.seeds.begin(), cfg.seeds.end(), 0);
    cfg.negative_ratio = opt.negative_ratio;
    cfg.trainers["light"] = learning::make_light_trainer(hyper);
    cfg.trainers["heavy"] = learning::make_heavy_trainer(hyper, table);

    const auto result = eval::run_simulation(cfg);
    if (!opt.out.empty()) fsutil::write_file_atomic(opt.out, eval::simulation_csv(result));
    if (!opt.summary.empty()) fsutil::write_file_atomic(opt.summary, eval::simulation_summary_csv(result));

    fmt::print("iteration  flavor  mean_f1  std_f1\n");
    policy::PolicyConfig pc;
    pc.model_schedule = cfg.model_schedule;
    for (std::size_t i = 0; i < result.mean_f1.size(); ++i) {
        fmt::print("{:>9}  {:>6}  {:.4f}   {:.4f}\n", i, policy::model_flavor_for(i, pc), result.mean_f1[i],
                   result.std_f1[i]);
    }
    return 0;
}

struct SynthOptions {
    std::string out_dir = ".";
    std::size_t elements = 3000;
    double prior = 0.08;
    std::uint64_t seed = 7;
};

int synth(const SynthOptions& opt) {
    synthetic::CorpusSpec spec;
    spec.elements = opt.elements;
    spec.prior = opt.prior;
    spec.seed = opt.seed;
    const auto corpus = synthetic::make_corpus(spec);
    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    fsutil::write_file_atomic(dir / "corpus.csv", corpus.csv);
    fsutil::write_file_atomic(dir / "embeddings.txt", synthetic::embeddings_to_text(corpus));
    const auto positives = std::count(corpus.gold.begin(), corpus.gold.end(), true);
    fmt::print("wrote {} ({} elements, {} positive) and {}\n", (dir / "corpus.csv").string(), corpus.gold.size(),
               positives, (dir / "embeddings.txt").string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App cli{"labelkit: human-in-the-loop text classification server and simulation harness"};
    cli.require_subcommand(1);
    std::string log_level = "info";
    cli.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    ServeOptions serve_opt;
    auto* serve_cmd = cli.add_subcommand("serve", "Run the HTTP service");
    serve_cmd->add_option("--config", serve_opt.config, "JSON config file");
    serve_cmd->add_option("--data-root", serve_opt.data_root, "Directory for datasets, label logs and models");
    serve_cmd->add_option("--host", serve_opt.host, "Listen address");
    serve_cmd->add_option("--port", serve_opt.port, "Listen port (0 picks a free one)");
    serve_cmd->add_option("--embeddings", serve_opt.embeddings, "Word-vector text file");

    SimulateOptions sim_opt;
    auto* sim_cmd = cli.add_subcommand("simulate", "Replay the labeling loop against gold labels");
    sim_cmd->add_option("--corpus", sim_opt.corpus, "CSV with a text column and a gold column")->required();
    sim_cmd->add_option("--gold-column", sim_opt.gold_column, "Gold label column")->capture_default_str();
    sim_cmd->add_option("--query", sim_opt.query, "Seed query, e.g. \"word | two words\"")->required();
    sim_cmd->add_option("--iterations", sim_opt.iterations)->capture_default_str();
    sim_cmd->add_option("--batch", sim_opt.batch, "Examples added per iteration")->capture_default_str();
    sim_cmd->add_option("--seed-target", sim_opt.seed_target, "Positives collected from the seed query")
        ->capture_default_str();
    sim_cmd->add_option("--schedule", sim_opt.schedule, "Model flavor per iteration range")->capture_default_str();
    sim_cmd->add_option("--strategy", sim_opt.strategy, "uncertainty or random")->capture_default_str();
    sim_cmd->add_option("--seeds", sim_opt.seeds, "Number of seeds (0..n-1)")->capture_default_str();
    sim_cmd->add_option("--out", sim_opt.out, "Per-seed results CSV");
    sim_cmd->add_option("--summary", sim_opt.summary, "Per-iteration mean/std CSV");
    sim_cmd->add_option("--embeddings", sim_opt.embeddings, "Word-vector text file for the heavy flavor");
    sim_cmd->add_option("--negative-ratio", sim_opt.negative_ratio, "Weak negatives per positive (0 disables)")
        ->capture_default_str();
    sim_cmd->add_option("--lambda", sim_opt.lambda, "SVM regularization (0 = 1/n)")->capture_default_str();
    sim_cmd->add_option("--epochs", sim_opt.epochs)->capture_default_str();

    SynthOptions synth_opt;
    auto* synth_cmd = cli.add_subcommand("synth", "Write a synthetic low-prior demo corpus and word vectors");
    synth_cmd->add_option("--out-dir", synth_opt.out_dir)->capture_default_str();
    synth_cmd->add_option("--elements", synth_opt.elements)->capture_default_str();
    synth_cmd->add_option("--prior", synth_opt.prior)->capture_default_str();
    synth_cmd->add_option("--seed", synth_opt.seed)->capture_default_str();

    CLI11_PARSE(cli, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*serve_cmd) return serve(serve_opt);
        if (*sim_cmd) return simulate(sim_opt);
        if (*synth_cmd) return synth(synth_opt);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(e.code())).c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
