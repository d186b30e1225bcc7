// geosketch: streaming EMD / MST estimates over {0,1}^d turnstile streams.
//
//   geosketch --problem emd --passes 2 --oracle stream.txt
//   geosketch gen --kind hard_mst --n 256 --d 64 --k 5 > hard.txt

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>

#include "CLI11.hpp"
#include "geosketch/geosketch.hpp"

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
    if (path == "-") return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << body;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming EMD and MST estimates over the hypercube"};
    app.require_subcommand(0, 1);

    std::string input = "-", problem = "emd", format = "auto", config_path, report_path, csv_path;
    int passes = 2;
    double eps = 0.1;
    std::optional<std::uint64_t> seed;
    bool oracle = false;
    unsigned threads = 1;
    app.add_option("input", input, "stream file, '-' for stdin")->capture_default_str();
    app.add_option("--problem", problem, "emd or mst")->check(CLI::IsMember({"emd", "mst"}))->capture_default_str();
    app.add_option("--passes", passes, "EMD passes")->check(CLI::IsMember({1, 2}))->capture_default_str();
    app.add_option("--eps", eps, "EMD additive parameter")->capture_default_str();
    app.add_option("--seed", seed, "sketch seed");
    app.add_flag("--oracle", oracle, "also compute the exact value");
    app.add_option("--config", config_path, "JSON config");
    app.add_option("--format", format, "input format")->check(CLI::IsMember({"auto", "text", "bin"}))->capture_default_str();
    app.add_option("--report", report_path, "write the JSON report here");
    app.add_option("--csv", csv_path, "write a CSV row here");
    app.add_option("--threads", threads, "worker threads")->capture_default_str();

    auto* gen = app.add_subcommand("gen", "write a generated instance");
    std::string kind = "uniform", out_format = "text", out_path = "-";
    geosketch::GenParams gp;
    std::optional<int> z;
    gen->add_option("--kind", kind, "uniform, clustered, matched_noise, hard_mst, hard_emd")->capture_default_str();
    gen->add_option("--n", gp.n, "points per set")->capture_default_str();
    gen->add_option("--d", gp.d, "dimension, a power of two")->capture_default_str();
    gen->add_option("--seed", gp.seed)->capture_default_str();
    gen->add_option("--eps", gp.eps, "matched_noise flip rate")->capture_default_str();
    gen->add_option("--k", gp.k, "hard_mst groups")->capture_default_str();
    gen->add_option("--alpha", gp.alpha, "hard kinds: noise rate 1/(200 alpha)")->capture_default_str();
    gen->add_option("--clusters", gp.clusters)->capture_default_str();
    gen->add_option("--flip", gp.flip, "clustered spread")->capture_default_str();
    gen->add_option("--churn", gp.churn, "transient insert/delete pairs")->capture_default_str();
    gen->add_option("--z", z, "hard kinds: planted bit")->check(CLI::IsMember({0, 1}));
    gen->add_option("--format", out_format)->check(CLI::IsMember({"text", "bin"}))->capture_default_str();
    gen->add_option("--out", out_path, "'-' for stdout")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            gp.kind = geosketch::parse_instance_kind(kind);
            gp.z = z;
            auto inst = geosketch::gen_instance(gp);
            std::string body;
            if (out_format == "bin") {
                auto b = geosketch::write_stream_binary(inst.stream);
                body.assign(b.begin(), b.end());
            } else {
                if (inst.z) body += "# z " + std::to_string(*inst.z) + "\n";
                body += geosketch::write_stream_text(inst.stream);
            }
            if (out_path == "-")
                std::cout << body;
            else
                write_file(out_path, body);
            if (inst.z && out_format == "bin") std::cerr << "z " << *inst.z << "\n";
            return 0;
        }

        geosketch::RunOptions opt;
        opt.oracle = oracle;
        if (!config_path.empty()) {
            auto j = nlohmann::json::parse(read_all(config_path));
            if (j.contains("emd") || j.contains("mst")) {
                if (j.contains("emd")) opt.emd.apply_json(j["emd"]);
                if (j.contains("mst")) opt.mst.apply_json(j["mst"]);
            } else {
                opt.emd.apply_json(j);
                opt.mst.apply_json(j);
            }
        }
        if (const char* env = std::getenv("GEOSKETCH_SEED")) {
            opt.emd.seed = opt.mst.seed = std::stoull(env);
        }
        if (seed) opt.emd.seed = opt.mst.seed = *seed;
        if (app.count("--passes")) opt.emd.passes = passes;
        if (app.count("--eps")) opt.emd.eps = eps;
        if (app.count("--threads")) opt.emd.threads = opt.mst.threads = threads;

        auto bytes = read_all(input);
        geosketch::Stream s;
        if (format == "bin")
            s = geosketch::parse_stream_binary(bytes);
        else if (format == "text")
            s = geosketch::parse_stream_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
        else
            s = geosketch::parse_stream(bytes);

        auto r = geosketch::run_estimator(s, geosketch::parse_problem(problem), opt);
        auto text = r.to_json().dump(2) + "\n";
        std::cout << text;
        if (!report_path.empty()) write_file(report_path, text);
        if (!csv_path.empty()) write_file(csv_path, geosketch::EstimateReport::csv_header() + "\n" + r.csv_row() + "\n");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
