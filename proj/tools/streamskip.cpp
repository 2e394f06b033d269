#include <CLI11.hpp>

#include "streamskip/cli.hpp"

namespace cli = streamskip::cli;

namespace {

struct RunFlags {
  std::string config_path;
  std::string mode;
  std::string profile;
  std::string out_dir;
  std::string pattern;
  std::size_t frames = 0;
  int width = 0;
  int height = 0;
  std::vector<double> motion;
  std::uint64_t seed = 0;
  int flow_n = 0;
  std::string flow_resolution;
  std::string input_dir;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamskip: real-time img2img pipeline engine and benchmark harness"};
  app.require_subcommand(1);
  app.footer("Flags override config-file values, which override built-in defaults.\n"
             "STREAMSKIP_SEED overrides every seed for deterministic runs.");

  // run ----------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Process a frame stream through a pipeline mode");
  RunFlags rf;
  run->add_option("--config", rf.config_path, "JSON config file");
  auto* f_mode = run->add_option("--mode", rf.mode, "plain | flowskip | knn | hybrid");
  auto* f_profile = run->add_option("--profile", rf.profile,
                                    "latency preset (sdturbo-coreml, sdxs-coreml, "
                                    "pix2pix-turbo, custom)");
  auto* f_out = run->add_option("--out", rf.out_dir, "output directory");
  auto* f_frames = run->add_option("--frames", rf.frames, "synthetic frame count");
  auto* f_width = run->add_option("--width", rf.width, "synthetic frame width");
  auto* f_height = run->add_option("--height", rf.height, "synthetic frame height");
  auto* f_pattern = run->add_option("--pattern", rf.pattern,
                                    "gradient | checker | bandlimited-noise");
  auto* f_motion = run->add_option("--motion", rf.motion,
                                   "per-frame motion dx dy")->expected(2);
  auto* f_seed = run->add_option("--seed", rf.seed, "base seed");
  auto* f_flow_n = run->add_option("--flow-n", rf.flow_n, "skip interval N");
  auto* f_flow_res = run->add_option("--flow-resolution", rf.flow_resolution,
                                     "full | half");
  auto* f_input = run->add_option("--input", rf.input_dir, "input directory of .ppm frames");

  // bench --------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "Run benchmark scenarios from a JSON file");
  std::string scenario_file;
  std::string csv_path;
  bench_cmd->add_option("scenarios", scenario_file, "scenario JSON file")->required();
  bench_cmd->add_option("--csv", csv_path, "also write results as CSV");

  // index --------------------------------------------------------------
  auto* index_cmd = app.add_subcommand("index", "Build, search or evaluate ANN indices");
  index_cmd->require_subcommand(1);

  auto* ib = index_cmd->add_subcommand("build", "Build an IVF-PQ index file");
  cli::IndexBuildOptions ibo;
  std::string ib_vectors;
  ib->add_option("--vectors", ib_vectors, "input vector file (u32 dim + f32 rows)");
  ib->add_option("--synthetic", ibo.synthetic_n, "generate N clustered vectors instead");
  ib->add_option("--dim", ibo.dim, "vector dimension (synthetic)");
  ib->add_option("--clusters", ibo.clusters, "cluster count (synthetic)");
  ib->add_option("--std", ibo.cluster_std, "cluster stddev (synthetic)");
  ib->add_option("--nlist", ibo.nlist, "coarse centroid count");
  ib->add_option("--m", ibo.m, "PQ subquantizer count");
  ib->add_option("--nbits", ibo.nbits, "bits per PQ code");
  ib->add_option("--seed", ibo.seed, "training seed");
  ib->add_option("--out", ibo.out, "output index path");

  auto* is = index_cmd->add_subcommand("search", "Search an index with stored queries");
  cli::IndexSearchOptions iso;
  std::string is_index, is_vectors, is_queries;
  is->add_option("--index", is_index, "IVF-PQ index file");
  is->add_option("--vectors", is_vectors, "vector file for exact (flat) search");
  is->add_option("--queries", is_queries, "query vector file")->required();
  is->add_option("--k", iso.k, "neighbors per query");
  is->add_option("--nprobe", iso.nprobe, "inverted lists to probe");

  auto* ie = index_cmd->add_subcommand("eval", "recall@k and latency-vs-n trend");
  cli::IndexEvalOptions ieo;
  std::string ie_vectors;
  ie->add_option("--vectors", ie_vectors, "input vector file");
  ie->add_option("--synthetic", ieo.synthetic_n, "generate N clustered vectors");
  ie->add_option("--dim", ieo.dim, "vector dimension (synthetic)");
  ie->add_option("--clusters", ieo.clusters, "cluster count (synthetic)");
  ie->add_option("--std", ieo.cluster_std, "cluster stddev (synthetic)");
  ie->add_option("--queries", ieo.n_queries, "query count");
  ie->add_option("--k", ieo.k, "neighbors per query");
  ie->add_option("--nlist", ieo.nlist, "coarse centroid count");
  ie->add_option("--m", ieo.m, "PQ subquantizer count");
  ie->add_option("--nbits", ieo.nbits, "bits per PQ code");
  ie->add_option("--nprobe", ieo.nprobe, "inverted lists to probe");
  ie->add_option("--seed", ieo.seed, "seed");

  // flow ---------------------------------------------------------------
  auto* flow_cmd = app.add_subcommand("flow", "Optical flow demos and the skip table");
  auto* fd = flow_cmd->add_subcommand("demo", "Estimate flow between two frames");
  cli::FlowDemoOptions fdo;
  std::string fd_a, fd_b;
  fd->add_option("--frame-a", fd_a, "first frame (.ppm)");
  fd->add_option("--frame-b", fd_b, "second frame (.ppm)");
  fd->add_option("--width", fdo.width, "synthetic frame width");
  fd->add_option("--height", fdo.height, "synthetic frame height");
  fd->add_option("--shift-x", fdo.shift_dx, "synthetic shift in x");
  fd->add_option("--shift-y", fdo.shift_dy, "synthetic shift in y");
  fd->add_option("--resolution", fdo.resolution, "full | half");
  fd->add_option("--window", fdo.params.window_size, "correlation window");
  fd->add_option("--levels", fdo.params.pyramid_levels, "pyramid levels");
  fd->add_option("--iterations", fdo.params.iterations, "iterations per level");
  fd->add_option("--out", fdo.out_dir, "output directory");
  fd->add_option("--seed", fdo.seed, "texture seed");
  fd->add_flag("--table", fdo.table, "print the theoretical skip table instead");
  fd->add_option("--unet", fdo.unet_ms, "full-chain latency for the table");
  fd->add_option("--warp", fdo.warp_ms, "warp latency for the table");
  fd->add_option("--max-n", fdo.max_n, "largest N in the table");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return cli::guarded([&] {
      cli::AppConfig cfg;
      if (!rf.config_path.empty()) cfg = cli::load_app_config(rf.config_path);
      if (*f_mode) cfg.pipeline.mode = rf.mode;
      if (*f_profile) cfg.pipeline.profile = rf.profile;
      if (*f_out) cfg.io.output_dir = rf.out_dir;
      if (*f_frames) cfg.io.count = rf.frames;
      if (*f_width) cfg.io.synthetic.width = rf.width;
      if (*f_height) cfg.io.synthetic.height = rf.height;
      if (*f_pattern)
        cfg.io.synthetic.pattern = streamskip::synthetic::pattern_from_string(rf.pattern);
      if (*f_motion) {
        cfg.io.synthetic.motion_dx = rf.motion[0];
        cfg.io.synthetic.motion_dy = rf.motion[1];
      }
      if (*f_seed) {
        cfg.pipeline.seed = rf.seed;
        cfg.coherence.seed = rf.seed;
        cfg.io.synthetic.seed.value = rf.seed;
      }
      if (*f_flow_n) cfg.flow_cfg.n = rf.flow_n;
      if (*f_flow_res) cfg.flow_cfg.resolution = rf.flow_resolution;
      if (*f_input) cfg.io.input_dir = rf.input_dir;
      if (cfg.pipeline.mode != "plain" && cfg.pipeline.mode != "flowskip" &&
          cfg.pipeline.mode != "knn" && cfg.pipeline.mode != "hybrid")
        throw std::invalid_argument("unknown mode '" + cfg.pipeline.mode + "'");
      return cli::cmd_run(std::move(cfg));
    });
  }
  if (bench_cmd->parsed()) {
    return cli::guarded([&] {
      std::optional<std::filesystem::path> csv;
      if (!csv_path.empty()) csv = csv_path;
      return cli::cmd_bench(scenario_file, csv);
    });
  }
  if (index_cmd->parsed()) {
    if (ib->parsed())
      return cli::guarded([&] {
        if (!ib_vectors.empty()) ibo.vectors_file = ib_vectors;
        return cli::cmd_index_build(std::move(ibo));
      });
    if (is->parsed())
      return cli::guarded([&] {
        if (!is_index.empty()) iso.index_file = is_index;
        if (!is_vectors.empty()) iso.vectors_file = is_vectors;
        iso.queries_file = is_queries;
        return cli::cmd_index_search(iso);
      });
    if (ie->parsed())
      return cli::guarded([&] {
        if (!ie_vectors.empty()) ieo.vectors_file = ie_vectors;
        return cli::cmd_index_eval(std::move(ieo));
      });
  }
  if (flow_cmd->parsed() && fd->parsed()) {
    return cli::guarded([&] {
      if (!fd_a.empty()) fdo.frame_a = fd_a;
      if (!fd_b.empty()) fdo.frame_b = fd_b;
      return cli::cmd_flow(std::move(fdo));
    });
  }
  return 1;
}
