// frameslide CLI: reproducible generation, training, corpus synthesis and
// evaluation runs, each emitting a JSON manifest that replays bit-exactly.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "frameslide/controller.hpp"
#include "frameslide/eval.hpp"
#include "frameslide/manifest.hpp"
#include "frameslide/micro.hpp"
#include "frameslide/toyworld.hpp"

namespace fs = std::filesystem;
using namespace frameslide;

namespace {

int worker_count() {
  if (const char* env = std::getenv("FRAMESLIDE_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return int(std::max(1u, std::thread::hardware_concurrency()));
}

GaussianWorldSpec parse_world(const std::string& spec) {
  GaussianWorldSpec world;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("bad --world entry '" + item + "'");
    std::string key = item.substr(0, eq);
    double value = std::stod(item.substr(eq + 1));
    if (key == "rho") world.rho = value;
    else if (key == "sigma2") world.sigma2 = value;
    else if (key == "mu") world.mu = value;
    else if (key == "dim") world.frame_dim = int(value);
    else throw ConfigError("unknown --world key '" + key + "'");
  }
  world.validate();
  return world;
}

struct GenerateArgs {
  std::string task = "ti2v";
  std::vector<std::string> images;
  int label = -1;  // -1 = unconditional (null label)
  int frames = 15;
  int queue = 4;
  int steps = 50;
  int ddim = 0;
  int resample = 1;
  double guidance = 9.0;
  uint64_t seed = 0;
  std::string denoiser = "analytic";
  std::string world = "rho=0.9,sigma2=1,mu=0";
  std::string out;
  bool no_inversion = false;
  int factor = 4;
  double beta_start = 1e-4, beta_end = 0.02;

  nlohmann::json to_json() const {
    return {{"task", task},         {"images", images},     {"label", label},
            {"frames", frames},     {"queue", queue},       {"steps", steps},
            {"ddim", ddim},         {"resample", resample}, {"guidance", guidance},
            {"seed", seed},         {"denoiser", denoiser}, {"world", world},
            {"out", out},           {"no_inversion", no_inversion},
            {"factor", factor},     {"beta_start", beta_start}, {"beta_end", beta_end}};
  }
  static GenerateArgs from_json(const nlohmann::json& j) {
    GenerateArgs a;
    a.task = j.at("task");
    a.images = j.at("images").get<std::vector<std::string>>();
    a.label = j.at("label");
    a.frames = j.at("frames");
    a.queue = j.at("queue");
    a.steps = j.at("steps");
    a.ddim = j.at("ddim");
    a.resample = j.at("resample");
    a.guidance = j.at("guidance");
    a.seed = j.at("seed");
    a.denoiser = j.at("denoiser");
    a.world = j.at("world");
    a.out = j.at("out");
    a.no_inversion = j.at("no_inversion");
    a.factor = j.at("factor");
    a.beta_start = j.at("beta_start");
    a.beta_end = j.at("beta_end");
    return a;
  }
};

struct DenoiserBundle {
  std::unique_ptr<Denoiser> den;
  std::string id;
  std::string checksum;
  int h = 1, w = 1, c = 4;  // latent geometry for noise-initialized sampling
};

DenoiserBundle make_denoiser(const std::string& spec, const std::string& world_spec,
                             const NoiseSchedule& sched) {
  DenoiserBundle b;
  if (spec == "analytic") {
    GaussianWorldSpec world = parse_world(world_spec);
    b.den = std::make_unique<AnalyticDenoiser>(world, sched);
    b.id = "analytic";
    b.h = 1;
    b.w = 1;
    b.c = world.frame_dim;
  } else if (spec.rfind("micro:", 0) == 0) {
    std::string path = spec.substr(6);
    auto model = std::make_unique<MicroDenoiser>(MicroDenoiser::load(path));
    b.h = model->cfg.h;
    b.w = model->cfg.w;
    b.c = model->cfg.cin;
    b.den = std::move(model);
    b.id = "micro:" + path;
    b.checksum = hex64(file_digest(path));
  } else {
    throw ConfigError("--denoiser must be 'analytic' or 'micro:PATH', got '" + spec + "'");
  }
  return b;
}

int run_generate(const GenerateArgs& a) {
  auto t0 = std::chrono::steady_clock::now();
  GenerationConfig cfg;
  cfg.T = a.steps;
  cfg.K = a.queue;
  cfg.M = a.frames;
  cfg.guidance = a.guidance;
  cfg.ddim_steps = a.ddim;
  cfg.resample_u = a.resample;
  cfg.seed = a.seed;
  cfg.use_inversion = !a.no_inversion;
  cfg.validate();

  NoiseSchedule sched = make_linear_schedule(cfg.T, a.beta_start, a.beta_end);
  DenoiserBundle den = make_denoiser(a.denoiser, a.world, sched);
  ConditionLabel y = (a.label < 0) ? ConditionLabel::null() : ConditionLabel::cls(a.label);
  Rng rng = Rng(a.seed).stream(0);

  fs::create_directories(a.out);
  std::ofstream trace_os(fs::path(a.out) / "trace.txt");
  TraceSink trace = [&](const TraceEvent& e) {
    trace_os << e.step << " " << e.resample << " " << hex64(e.replaced_checksum) << "\n";
  };

  RunStats stats;
  PixelVideo video;
  std::vector<LatentFrame> latents;
  if (a.task == "t2v") {
    LatentClip clip = sample_t2v(*den.den, sched, y, cfg, den.h, den.w, den.c, rng, &stats);
    if (den.c == 3) video = decode_clip(clip, a.factor);  // AR(1) latents have no pixel form
    latents = {clip.frames.begin(), clip.frames.end()};
  } else {
    if (a.images.empty()) throw ConfigError("--image required for task '" + a.task + "'");
    std::vector<PixelFrame> images;
    for (const auto& p : a.images) images.push_back(read_ppm(p));
    if (a.task == "ti2v") {
      video = ti2v_generate(*den.den, sched, a.factor, images.front(), y, cfg, rng, &stats, trace);
    } else if (a.task == "predict") {
      video = predict_generate(*den.den, sched, a.factor, images, y, cfg, rng, &stats);
    } else if (a.task == "infill") {
      video = infill_generate(*den.den, sched, a.factor, images, y, cfg, rng, &stats);
    } else {
      throw ConfigError("--task must be one of ti2v|infill|predict|t2v");
    }
    for (const auto& f : video.frames) latents.push_back(encode(f, a.factor));
  }
  trace_os.close();

  RunManifest m;
  m.command = "generate";
  m.args = a.to_json();
  m.seed = a.seed;
  m.schedule = {{"T", cfg.T}, {"beta_start", a.beta_start}, {"beta_end", a.beta_end}};
  m.denoiser_id = den.id;
  m.denoiser_checksum = den.checksum;
  m.rng_algorithm = Rng::algorithm_name();
  write_schedule_csv(sched, (fs::path(a.out) / "schedule.csv").string());
  char name[32];
  for (size_t i = 0; i < latents.size(); ++i) {
    if (i < size_t(video.length())) {
      std::snprintf(name, sizeof(name), "frame_%04zu.ppm", i);
      write_ppm(video.frames[i], (fs::path(a.out) / name).string());
      m.outputs.push_back(name);
    }
    std::snprintf(name, sizeof(name), "frame_%04zu.lat", i);
    write_latent(latents[i], (fs::path(a.out) / name).string());
    m.outputs.push_back(name);
  }
  m.outputs.push_back("trace.txt");
  m.outputs.push_back("schedule.csv");
  for (const auto& o : m.outputs) m.output_digests.push_back(hex64(file_digest(fs::path(a.out) / o)));
  m.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  int synthesized = std::max(1, video.length() - 1);
  m.denoiser_calls_per_frame = stats.denoise_calls / synthesized;
  m.save(fs::path(a.out) / "manifest.json");
  return 0;
}

struct TrainArgs {
  std::string corpus;
  int steps = 2000;
  double null_prob = 0.1;
  double lr = 1e-3;
  uint64_t seed = 0;
  std::string out;
  int window = 5;
  int factor = 4;
  int channels = 12;
  int embed = 16;
  int T = 50;
  double beta_start = 1e-4, beta_end = 0.02;

  nlohmann::json to_json() const {
    return {{"corpus", corpus}, {"steps", steps},   {"null_prob", null_prob},
            {"lr", lr},         {"seed", seed},     {"out", out},
            {"window", window}, {"factor", factor}, {"channels", channels},
            {"embed", embed},   {"T", T},           {"beta_start", beta_start},
            {"beta_end", beta_end}};
  }
  static TrainArgs from_json(const nlohmann::json& j) {
    TrainArgs a;
    a.corpus = j.at("corpus");
    a.steps = j.at("steps");
    a.null_prob = j.at("null_prob");
    a.lr = j.at("lr");
    a.seed = j.at("seed");
    a.out = j.at("out");
    a.window = j.at("window");
    a.factor = j.at("factor");
    a.channels = j.at("channels");
    a.embed = j.at("embed");
    a.T = j.at("T");
    a.beta_start = j.at("beta_start");
    a.beta_end = j.at("beta_end");
    return a;
  }
};

std::vector<TrainItem> load_train_windows(const std::string& corpus, int window, int factor) {
  auto entries = read_corpus_manifest(corpus);
  if (entries.empty()) throw ConfigError("empty corpus manifest in " + corpus);
  std::vector<TrainItem> items;
  for (const auto& e : entries) {
    PixelVideo video = read_video_dir(fs::path(corpus) / e.path);
    LatentClip clip = encode_video(video, factor);
    for (int start = 0; start + window <= clip.length(); start += 2) {
      TrainItem item;
      item.label = e.label;
      item.clip.step = 0;
      item.clip.frames.assign(clip.frames.begin() + start, clip.frames.begin() + start + window);
      items.push_back(std::move(item));
    }
  }
  if (items.empty()) throw ConfigError("corpus clips shorter than training window");
  return items;
}

int run_train(const TrainArgs& a) {
  auto t0 = std::chrono::steady_clock::now();
  if (!fs::exists(a.corpus)) throw ConfigError("corpus directory not found: " + a.corpus);
  NoiseSchedule sched = make_linear_schedule(a.T, a.beta_start, a.beta_end);
  std::vector<TrainItem> dataset = load_train_windows(a.corpus, a.window, a.factor);
  const Tensor& proto = dataset.front().clip.frames.front();

  MicroConfig mc;
  mc.frames = a.window;
  mc.h = proto.h;
  mc.w = proto.w;
  mc.cin = proto.c;
  mc.channels = a.channels;
  mc.embed = a.embed;
  mc.classes = MotionClass::kCount;
  MicroDenoiser model(mc);
  Rng rng = Rng(a.seed).stream(1);
  model.init(rng);
  std::vector<double> trace = train_micro(model, dataset, sched, a.null_prob, a.steps, a.lr, rng);

  fs::create_directories(fs::path(a.out).parent_path().empty() ? "." : fs::path(a.out).parent_path().string());
  model.save(a.out);
  write_loss_csv(trace, a.out + ".loss.csv");

  RunManifest m;
  m.command = "train";
  m.args = a.to_json();
  m.seed = a.seed;
  m.schedule = {{"T", a.T}, {"beta_start", a.beta_start}, {"beta_end", a.beta_end}};
  m.denoiser_id = "micro:" + a.out;
  m.denoiser_checksum = hex64(file_digest(a.out));
  m.rng_algorithm = Rng::algorithm_name();
  m.outputs = {a.out, a.out + ".loss.csv"};
  for (const auto& o : m.outputs) m.output_digests.push_back(hex64(file_digest(o)));
  m.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.save(a.out + ".manifest.json");
  return 0;
}

struct EvalArgs {
  std::string real, fake;
  std::string group_by;  // "", "label", "subject"
  std::string out;

  nlohmann::json to_json() const {
    return {{"real", real}, {"fake", fake}, {"group_by", group_by}, {"out", out}};
  }
  static EvalArgs from_json(const nlohmann::json& j) {
    EvalArgs a;
    a.real = j.at("real");
    a.fake = j.at("fake");
    a.group_by = j.at("group_by");
    a.out = j.at("out");
    return a;
  }
};

std::map<std::string, std::vector<PixelVideo>> load_grouped_corpus(const std::string& root,
                                                                   const std::string& group_by) {
  std::map<std::string, std::vector<PixelVideo>> groups;
  if (!fs::is_directory(root)) throw IoError("corpus directory not found: " + root);
  if (fs::exists(fs::path(root) / "manifest.jsonl")) {
    for (const auto& e : read_corpus_manifest(root)) {
      std::string key = "all";
      if (group_by == "label") key = MotionClass::from_id(e.label).name();
      else if (group_by == "subject") key = e.subject.empty() ? "all" : e.subject;
      groups[key].push_back(read_video_dir(fs::path(root) / e.path));
    }
  } else {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw ConfigError("no clip directories in " + root);
    for (const auto& d : dirs) groups["all"].push_back(read_video_dir(d));
  }
  return groups;
}

int run_eval(const EvalArgs& a) {
  auto t0 = std::chrono::steady_clock::now();
  auto real = load_grouped_corpus(a.real, a.group_by);
  auto fake = load_grouped_corpus(a.fake, a.group_by);
  std::map<std::string, std::pair<std::vector<PixelVideo>, std::vector<PixelVideo>>> groups;
  for (auto& [key, videos] : real) {
    auto it = fake.find(key);
    if (it == fake.end()) throw ConfigError("group '" + key + "' missing from --fake corpus");
    groups[key] = {std::move(videos), std::move(it->second)};
  }
  GroupedFvdResult res = grouped_fvd(groups);
  write_fvd_csv(res, a.out);

  RunManifest m;
  m.command = "eval";
  m.args = a.to_json();
  m.rng_algorithm = Rng::algorithm_name();
  m.outputs = {a.out};
  m.output_digests = {hex64(file_digest(a.out))};
  m.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.save(a.out + ".manifest.json");
  return 0;
}

struct WorldgenArgs {
  std::string kind = "shapes";
  int count = 0;
  uint64_t seed = 0;
  std::string out;
  int size = 32;
  int frames = 16;
  double rho = 0.9, sigma2 = 1.0, mu = 0.0;
  int dim = 4;

  nlohmann::json to_json() const {
    return {{"kind", kind},   {"count", count}, {"seed", seed}, {"out", out},
            {"size", size},   {"frames", frames}, {"rho", rho}, {"sigma2", sigma2},
            {"mu", mu},       {"dim", dim}};
  }
  static WorldgenArgs from_json(const nlohmann::json& j) {
    WorldgenArgs a;
    a.kind = j.at("kind");
    a.count = j.at("count");
    a.seed = j.at("seed");
    a.out = j.at("out");
    a.size = j.at("size");
    a.frames = j.at("frames");
    a.rho = j.at("rho");
    a.sigma2 = j.at("sigma2");
    a.mu = j.at("mu");
    a.dim = j.at("dim");
    return a;
  }
};

int run_worldgen(const WorldgenArgs& a) {
  auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(a.out);
  std::vector<CorpusEntry> entries(size_t(a.count));
  char name[32];
  if (a.kind == "shapes") {
    auto make_clip = [&](int i) {
      std::snprintf(name, sizeof(name), "clip_%04d", i);
      CorpusEntry e;
      e.path = name;
      e.label = i % MotionClass::kCount;  // round-robin keeps classes balanced
      e.seed = splitmix64(a.seed ^ uint64_t(i));
      e.subject = "s" + std::to_string((i / MotionClass::kCount) % 10);
      PixelVideo video = gen_shape_video(MotionClass::from_id(e.label), e.seed, a.frames, a.size);
      write_video_dir(video, fs::path(a.out) / e.path);
      entries[size_t(i)] = std::move(e);
    };
    int workers = std::min(worker_count(), std::max(1, a.count));
    if (workers <= 1) {
      for (int i = 0; i < a.count; ++i) make_clip(i);
    } else {
      std::vector<std::thread> pool;
      std::atomic<int> next{0};
      for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
          for (int i = next++; i < a.count; i = next++) make_clip(i);
        });
      for (auto& th : pool) th.join();
    }
  } else if (a.kind == "ar1") {
    GaussianWorldSpec world{a.dim, a.rho, a.sigma2, a.mu};
    for (int i = 0; i < a.count; ++i) {
      std::snprintf(name, sizeof(name), "clip_%04d", i);
      CorpusEntry e;
      e.path = name;
      e.seed = splitmix64(a.seed ^ uint64_t(i));
      Rng rng(e.seed);
      LatentClip clip = sample_ar1_clip(world, a.frames, rng);
      fs::create_directories(fs::path(a.out) / e.path);
      for (int f = 0; f < clip.length(); ++f) {
        char fname[32];
        std::snprintf(fname, sizeof(fname), "frame_%04d.lat", f);
        write_latent(clip.frames[size_t(f)], (fs::path(a.out) / e.path / fname).string());
      }
      entries[size_t(i)] = std::move(e);
    }
  } else {
    throw ConfigError("--kind must be shapes or ar1");
  }
  write_corpus_manifest(entries, a.out);

  RunManifest m;
  m.command = "worldgen";
  m.args = a.to_json();
  m.seed = a.seed;
  m.rng_algorithm = Rng::algorithm_name();
  m.outputs = {"manifest.jsonl"};
  for (const auto& e : entries) m.outputs.push_back(e.path);
  m.output_digests.push_back(hex64(file_digest(fs::path(a.out) / "manifest.jsonl")));
  for (const auto& e : entries) {
    uint64_t h = 0xcbf29ce484222325ULL;
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(fs::path(a.out) / e.path)) files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      uint64_t d = file_digest(f);
      h = fnv1a(&d, sizeof(d), h);
    }
    m.output_digests.push_back(hex64(h));
  }
  m.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.save(fs::path(a.out) / "run.manifest.json");
  return 0;
}

int run_replay(const std::string& manifest_path) {
  RunManifest m = RunManifest::load(manifest_path);
  if (m.command == "generate") return run_generate(GenerateArgs::from_json(m.args));
  if (m.command == "train") return run_train(TrainArgs::from_json(m.args));
  if (m.command == "eval") return run_eval(EvalArgs::from_json(m.args));
  if (m.command == "worldgen") return run_worldgen(WorldgenArgs::from_json(m.args));
  throw ConfigError("manifest command '" + m.command + "' is not replayable");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frameslide: repeat-and-slide diffusion video generation at desk scale"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* cgen = app.add_subcommand("generate", "synthesize a video");
  cgen->add_option("--task", gen.task, "ti2v|infill|predict|t2v");
  cgen->add_option("--image", gen.images, "input PPM image(s); repeat for infill/predict");
  cgen->add_option("--label", gen.label, "condition class id (omit for unconditional)");
  cgen->add_option("--frames", gen.frames, "frames to synthesize (M)");
  cgen->add_option("--queue", gen.queue, "conditioning queue length (K)");
  cgen->add_option("--steps", gen.steps, "diffusion steps (T)");
  cgen->add_option("--ddim", gen.ddim, "DDIM step count (0 = full DDPM)");
  cgen->add_option("--resample", gen.resample, "resampling iterations (U)");
  cgen->add_option("--guidance", gen.guidance, "classifier-free guidance scale");
  cgen->add_option("--seed", gen.seed, "RNG seed");
  cgen->add_option("--denoiser", gen.denoiser, "analytic or micro:PATH");
  cgen->add_option("--world", gen.world, "analytic world, e.g. rho=0.9,sigma2=1,mu=0");
  cgen->add_option("--out", gen.out, "output directory")->required();
  cgen->add_flag("--no-inversion", gen.no_inversion, "disable DDPM inversion");
  cgen->add_option("--factor", gen.factor, "codec down/upsample factor");
  cgen->add_option("--beta-start", gen.beta_start, "schedule beta_1");
  cgen->add_option("--beta-end", gen.beta_end, "schedule beta_T");

  TrainArgs tr;
  auto* ctr = app.add_subcommand("train", "train the micro denoiser");
  ctr->add_option("--corpus", tr.corpus, "shapes corpus directory")->required();
  ctr->add_option("--steps", tr.steps, "SGD steps");
  ctr->add_option("--null-prob", tr.null_prob, "null-label probability");
  ctr->add_option("--lr", tr.lr, "learning rate");
  ctr->add_option("--seed", tr.seed, "RNG seed");
  ctr->add_option("--out", tr.out, "parameter file path")->required();
  ctr->add_option("--window", tr.window, "training clip length (K+1)");
  ctr->add_option("--factor", tr.factor, "codec factor");
  ctr->add_option("--channels", tr.channels, "hidden channels");
  ctr->add_option("--embed", tr.embed, "embedding dim");
  ctr->add_option("--T", tr.T, "diffusion steps");
  ctr->add_option("--beta-start", tr.beta_start, "schedule beta_1");
  ctr->add_option("--beta-end", tr.beta_end, "schedule beta_T");

  EvalArgs ev;
  auto* cev = app.add_subcommand("eval", "FVD-lite between two corpora");
  cev->add_option("--real", ev.real, "real corpus dir")->required();
  cev->add_option("--fake", ev.fake, "generated corpus dir")->required();
  cev->add_option("--group-by", ev.group_by, "label|subject");
  cev->add_option("--out", ev.out, "output CSV")->required();

  WorldgenArgs wg;
  auto* cwg = app.add_subcommand("worldgen", "synthesize a toy corpus");
  cwg->add_option("--kind", wg.kind, "shapes|ar1");
  cwg->add_option("--count", wg.count, "clip count");
  cwg->add_option("--seed", wg.seed, "RNG seed");
  cwg->add_option("--out", wg.out, "corpus directory")->required();
  cwg->add_option("--size", wg.size, "pixel size (shapes)");
  cwg->add_option("--frames", wg.frames, "frames per clip");
  cwg->add_option("--rho", wg.rho, "AR(1) correlation");
  cwg->add_option("--sigma2", wg.sigma2, "AR(1) variance");
  cwg->add_option("--mu", wg.mu, "AR(1) mean");
  cwg->add_option("--dim", wg.dim, "AR(1) frame dim");

  std::string replay_path;
  auto* crep = app.add_subcommand("replay", "re-execute a recorded run");
  crep->add_option("manifest", replay_path, "path to manifest.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cgen->parsed()) return run_generate(gen);
    if (ctr->parsed()) return run_train(tr);
    if (cev->parsed()) return run_eval(ev);
    if (cwg->parsed()) return run_worldgen(wg);
    if (crep->parsed()) return run_replay(replay_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const RangeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
