// regmpc: closed-loop experiments with regional MPC feedback reuse.
//
//   regmpc simulate --config ex1.json --x0 "2.5,1.0" --strategy proposed --out tr.csv
//   regmpc batch    --config ex1.json --n 1000 --seed 42 --strategies jost,proposed,gamma --grid 201
//   regmpc netsim   --config pendulum.json --n 1000 --seed 7 --l 50
//   regmpc atlas    --config ex1.json --grid 201 --out atlas.json

#include "regmpc/regmpc.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace regmpc;
using nlohmann::json;

namespace {

constexpr int kExitInfeasible = 2;

unsigned worker_threads(unsigned requested) {
    unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MPC_REUSE_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap > 0)
            n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return std::max(1u, n);
}

Vector parse_state(const std::string& text) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t used = 0;
        try {
            vals.push_back(std::stod(tok, &used));
        } catch (const std::exception&) {
            throw ParseError("cannot parse state component '" + tok + "'");
        }
        if (tok.find_first_not_of(" \t", used) != std::string::npos)
            throw ParseError("cannot parse state component '" + tok + "'");
    }
    return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << text;
}

struct RunManifest {
    std::string config;
    std::string command;
    std::optional<std::uint64_t> seed;
    std::string strategy;
    std::vector<std::string> outputs;
    std::vector<std::string> argv;

    [[nodiscard]] json to_json() const {
        json j{{"config", config},       {"command", command}, {"strategy", strategy},
               {"outputs", outputs},     {"argv", argv},       {"tool_version", kVersion}};
        j["seed"] = seed ? json(*seed) : json(nullptr);
        return j;
    }

    void write_next_to(const std::string& output) const { write_text(output + ".manifest.json", to_json().dump(2) + "\n"); }
};

HalfspacePolytope intersect(const HalfspacePolytope& a, const HalfspacePolytope& b) {
    Matrix C(a.rows() + b.rows(), a.dim());
    Vector c(a.rows() + b.rows());
    C << a.C, b.C;
    c << a.c, b.c;
    return {std::move(C), std::move(c)};
}

json region_vertices(const ClosedLoopTrace& tr, const OcpSpec& spec) {
    json out = json::array();
    for (const auto& r : tr.regions) {
        json e{{"step", r.step}, {"active_set", r.active_set.indices()}};
        json verts = json::array();
        const HalfspacePolytope clipped = intersect(r.polytope, spec.Xset);
        if (!polytope_is_empty(clipped)) {
            for (const auto& v : vertices_2d(clipped))
                verts.push_back({v.x(), v.y()});
        }
        e["vertices"] = std::move(verts);
        out.push_back(std::move(e));
    }
    return out;
}

std::string trace_csv(const ClosedLoopTrace& tr, Eigen::Index n, Eigen::Index m) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << 'k';
    for (Eigen::Index i = 1; i <= n; ++i)
        os << ",x" << i;
    for (Eigen::Index i = 1; i <= m; ++i)
        os << ",u" << i;
    os << ",e\n";
    for (std::size_t k = 0; k < tr.inputs.size(); ++k) {
        os << k;
        for (Eigen::Index i = 0; i < n; ++i)
            os << ',' << tr.states[k](i);
        for (Eigen::Index i = 0; i < m; ++i)
            os << ',' << tr.inputs[k](i);
        os << ',' << tr.e[k] << '\n';
    }
    return os.str();
}

std::vector<Strategy> parse_strategies(const std::string& list) {
    std::vector<Strategy> out;
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(parse_strategy(tok));
    if (out.empty())
        throw ParseError("no strategies given");
    return out;
}

struct Common {
    std::string config;
    unsigned threads = 0;
    int max_steps = 1000;
    bool exclude_entry = false;
    std::vector<std::string> argv;
};

int cmd_simulate(const Common& co, const std::string& x0_text, const std::string& strategy_name,
                 const std::string& out, std::string regions_out, int grid) {
    const Problem prob = make_problem(load_config(co.config));
    const Vector x0 = parse_state(x0_text);
    if (x0.size() != prob.qp.n)
        throw DimensionError("--x0 has " + std::to_string(x0.size()) + " components, system has n=" +
                             std::to_string(prob.qp.n));
    const Strategy strategy = parse_strategy(strategy_name);
    SimOptions opt;
    opt.max_steps = co.max_steps;
    opt.count_terminal_entry = !co.exclude_entry;
    opt.record_regions = prob.qp.n == 2;
    ActiveSetAtlas atlas;
    if (strategy == Strategy::GammaOracle) {
        atlas = enumerate_by_grid(prob.qp, prob.spec.Xset, grid, worker_threads(co.threads));
        opt.atlas = &atlas;
    }
    if (!polytope_contains(prob.spec.Xset, x0) || !solve_qp(prob.qp, x0).optimal())
        throw InfeasibleError("infeasible initial state");
    const ClosedLoopTrace tr = simulate(prob, strategy, x0, opt);

    RunManifest man{co.config, "simulate", std::nullopt, std::string(to_string(strategy)), {out}, co.argv};
    write_text(out, trace_csv(tr, prob.qp.n, prob.qp.m));
    if (prob.qp.n == 2) {
        if (regions_out.empty())
            regions_out = out + ".regions.json";
        write_text(regions_out, region_vertices(tr, prob.spec).dump(2) + "\n");
        man.outputs.push_back(regions_out);
    }
    man.write_next_to(out);
    std::cout << "steps " << tr.steps() << ", QPs " << tr.qp_count << ", reused " << tr.reused() << '\n';
    return 0;
}

void print_table(const StrategyComparison& cmp) {
    std::cout << std::left << std::setw(10) << "strategy" << std::right << std::setw(10) << "reuse %" << std::setw(10)
              << "QPs" << std::setw(10) << "steps" << '\n';
    for (const auto& s : cmp.stats) {
        std::cout << std::left << std::setw(10) << to_string(s.strategy) << std::right << std::fixed
                  << std::setprecision(1) << std::setw(10) << 100.0 * s.reuse_pct << std::setw(10) << s.total_qps
                  << std::setw(10) << s.total_steps << '\n';
    }
    std::cout.unsetf(std::ios::floatfield);
    std::cout << "max trajectory deviation " << std::setprecision(3) << cmp.max_trajectory_deviation << '\n';
}

int cmd_batch(const Common& co, int n, std::uint64_t seed, const std::string& strategies_text, int grid,
              const std::string& out) {
    const Problem prob = make_problem(load_config(co.config));
    const auto strategies = parse_strategies(strategies_text);
    const unsigned threads = worker_threads(co.threads);
    SimOptions opt;
    opt.max_steps = co.max_steps;
    opt.count_terminal_entry = !co.exclude_entry;
    ActiveSetAtlas atlas;
    if (std::find(strategies.begin(), strategies.end(), Strategy::GammaOracle) != strategies.end()) {
        atlas = enumerate_by_grid(prob.qp, prob.spec.Xset, grid, threads);
        opt.atlas = &atlas;
    }
    const StrategyComparison cmp = compare_strategies(prob, strategies, n, seed, opt, threads);
    print_table(cmp);

    if (!out.empty()) {
        json j;
        j["config"] = co.config;
        j["n"] = n;
        j["seed"] = seed;
        j["count_terminal_entry"] = opt.count_terminal_entry;
        json rows = json::array();
        for (const auto& s : cmp.stats)
            rows.push_back(to_json(s));
        j["strategies"] = std::move(rows);
        j["max_trajectory_deviation"] = cmp.max_trajectory_deviation;
        j["qp_delta_first_minus_last"] = cmp.qp_savings_vs_first;
        if (opt.atlas)
            j["atlas"] = {{"grid", grid}, {"active_sets", atlas.entries.size()}, {"groups", atlas.groups.size()}};
        write_text(out, j.dump(2) + "\n");
        RunManifest{co.config, "batch", seed, strategies_text, {out}, co.argv}.write_next_to(out);
    }
    return 0;
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos)
        throw ParseError("endpoint must be host:port");
    const int port = std::stoi(text.substr(colon + 1));
    if (port <= 0 || port > 65535)
        throw ParseError("port out of range");
    return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

int cmd_netsim(const Common& co, int n, std::uint64_t seed, std::vector<std::size_t> ls, const std::string& transport,
               const std::string& remote, bool serve, int port, bool no_criterion, const std::string& out) {
    const Problem prob = make_problem(load_config(co.config));
    if (ls.empty())
        ls = {50, 10, 5};

    if (serve) {
        const netsim::CentralNode node(prob.qp, {ls.front(), !no_criterion});
        netsim::TcpListener listener(static_cast<std::uint16_t>(port));
        std::cout << "central node listening on 127.0.0.1:" << listener.port() << " (l=" << ls.front() << ")"
                  << std::endl;
        netsim::central_serve(listener, node);
        return 0;
    }

    const auto x0s = sample_initial_states(prob, n, seed);
    netsim::LocalOptions lopt;
    lopt.max_steps = co.max_steps;
    lopt.count_terminal_entry = !co.exclude_entry;
    const netsim::Transport tr = transport == "pipe" ? netsim::Transport::Pipe : netsim::Transport::Tcp;
    if (transport != "pipe" && transport != "tcp")
        throw ParseError("--transport must be pipe or tcp");

    const auto baseline = netsim::run_session(prob, x0s, {1, false}, tr, lopt);
    json runs = json::array();
    auto report = [&](const std::string& label, const netsim::NetsimResult& r) {
        const double red = netsim::request_reduction(baseline.stats, r.stats);
        std::cout << std::left << std::setw(14) << label << std::right << std::setw(10) << r.stats.requests
                  << std::setw(10) << r.stats.steps << std::fixed << std::setprecision(1) << std::setw(12)
                  << 100.0 * red << std::setw(12) << r.bytes << "  " << std::hex << std::setw(16)
                  << r.transcript_digest << std::dec << '\n';
        std::cout.unsetf(std::ios::floatfield);
        std::ostringstream dig;
        dig << std::hex << std::setw(16) << std::setfill('0') << r.transcript_digest;
        runs.push_back({{"label", label},
                        {"l", r.stats.l_limit},
                        {"requests", r.stats.requests},
                        {"steps", r.stats.steps},
                        {"reduction", red},
                        {"bytes", r.bytes},
                        {"transcript_fnv1a", dig.str()}});
    };
    std::cout << std::left << std::setw(14) << "session" << std::right << std::setw(10) << "requests" << std::setw(10)
              << "steps" << std::setw(12) << "reduction %" << std::setw(12) << "bytes" << "  transcript\n";
    report("baseline l=1", baseline);

    if (!remote.empty()) {
        const auto [host, rport] = parse_endpoint(remote);
        auto stream = netsim::tcp_connect(host, rport);
        netsim::TranscriptStream rec(*stream);
        netsim::NetsimResult r;
        for (const auto& x0 : x0s) {
            auto run = netsim::local_run(rec, prob.qp, prob.spec, prob.terminal.Tset, x0, lopt);
            r.stats += run.stats;
        }
        stream->close();
        r.transcript_digest = rec.digest();
        r.bytes = rec.bytes();
        report("remote", r);
    } else {
        for (std::size_t l : ls)
            report("l=" + std::to_string(l), netsim::run_session(prob, x0s, {l, !no_criterion}, tr, lopt));
    }

    if (!out.empty()) {
        json j{{"config", co.config}, {"n", n}, {"seed", seed}, {"transport", transport}, {"sessions", runs}};
        write_text(out, j.dump(2) + "\n");
        RunManifest{co.config, "netsim", seed, "proposed", {out}, co.argv}.write_next_to(out);
    }
    return 0;
}

int cmd_atlas(const Common& co, int grid, const std::string& out, bool with_polytopes) {
    const Problem prob = make_problem(load_config(co.config));
    const ActiveSetAtlas atlas = enumerate_by_grid(prob.qp, prob.spec.Xset, grid, worker_threads(co.threads));
    std::cout << "grid points " << atlas.grid_points << ", feasible " << atlas.feasible_points << ", active sets "
              << atlas.entries.size() << ", groups " << atlas.groups.size() << '\n';
    for (const auto& [key, members] : atlas.groups) {
        std::cout << "  " << std::left << std::setw(12) << key.to_string() << std::right << std::setw(6)
                  << members.size() << (atlas.reusable_group(key) ? "  reusable" : "") << '\n';
    }
    if (!out.empty()) {
        json j = atlas_json(atlas, with_polytopes);
        j["grid"] = grid;
        write_text(out, j.dump(2) + "\n");
        RunManifest{co.config, "atlas", std::nullopt, "", {out}, co.argv}.write_next_to(out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regional MPC with shared feedback laws"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Common co;
    co.argv.assign(argv, argv + argc);
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", co.config, "OCP configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--threads", co.threads, "worker threads (0: all cores, capped by MPC_REUSE_THREADS)");
        sub->add_option("--max-steps", co.max_steps, "step limit per trajectory")->check(CLI::PositiveNumber);
        sub->add_flag("--exclude-entry", co.exclude_entry, "stop before the first state in T instead of after it");
    };

    auto* sim = app.add_subcommand("simulate", "one closed-loop trajectory");
    add_common(sim);
    std::string x0, strategy = "proposed", out, regions_out;
    int grid = 201;
    sim->add_option("--x0", x0, "initial state, comma separated")->required();
    sim->add_option("--strategy", strategy, "qp | jost | proposed | gamma");
    sim->add_option("--out", out, "trace CSV")->required();
    sim->add_option("--regions-out", regions_out, "polytope vertices JSON (n=2); default <out>.regions.json");
    sim->add_option("--grid", grid, "atlas grid points per dimension (gamma)");

    auto* bat = app.add_subcommand("batch", "compare strategies over random initial states");
    add_common(bat);
    int n = 1000;
    std::uint64_t seed = 42;
    std::string strategies = "jost,proposed,gamma", bat_out;
    bat->add_option("--n", n, "number of initial states")->check(CLI::PositiveNumber);
    bat->add_option("--seed", seed, "sampling seed");
    bat->add_option("--strategies", strategies, "comma separated strategies");
    bat->add_option("--grid", grid, "atlas grid points per dimension (gamma)");
    bat->add_option("--out", bat_out, "statistics JSON");

    auto* net = app.add_subcommand("netsim", "networked central/local node experiment");
    add_common(net);
    std::vector<std::size_t> ls;
    std::string transport = "tcp", remote, net_out;
    bool serve = false, no_criterion = false;
    int port = 0;
    net->add_option("--n", n, "number of initial states")->check(CLI::PositiveNumber);
    net->add_option("--seed", seed, "sampling seed");
    net->add_option("--l", ls, "max sets per response (repeatable or comma separated)")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    net->add_option("--transport", transport, "tcp | pipe");
    net->add_option("--remote", remote, "connect to a running central node host:port");
    net->add_flag("--serve", serve, "run only the central node");
    net->add_option("--port", port, "port for --serve (0: any)");
    net->add_flag("--no-criterion", no_criterion, "central node always sends the single active set");
    net->add_option("--out", net_out, "session statistics JSON");

    auto* atl = app.add_subcommand("atlas", "enumerate active sets on a state grid");
    add_common(atl);
    std::string atlas_out;
    bool no_polytopes = false;
    atl->add_option("--grid", grid, "grid points per dimension");
    atl->add_option("--out", atlas_out, "atlas JSON");
    atl->add_flag("--no-polytopes", no_polytopes, "omit halfspace data from the JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return cmd_simulate(co, x0, strategy, out, regions_out, grid);
        if (bat->parsed())
            return cmd_batch(co, n, seed, strategies, grid, bat_out);
        if (net->parsed())
            return cmd_netsim(co, n, seed, ls, transport, remote, serve, port, no_criterion, net_out);
        if (atl->parsed())
            return cmd_atlas(co, grid, atlas_out, no_polytopes);
    } catch (const InfeasibleError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitInfeasible;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
