#include "salera/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "salera/agnostic.hpp"
#include "salera/analysis.hpp"
#include "salera/errors.hpp"
#include "salera/objective.hpp"

namespace salera {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Shortest text that reads back to the same double.
std::string num(double x) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::isnan(x) || std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += num(v[i]);
  }
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ParameterError("config: '" + key + "' expects a number, got '" + v + "'");
  return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] != '-') x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw ParameterError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto l = lower(v);
  if (l == "1" || l == "true" || l == "yes" || l == "on") return true;
  if (l == "0" || l == "false" || l == "no" || l == "off") return false;
  throw ParameterError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::filesystem::path resolve_mnist(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& name : {stem, stem + ".gz"})
    if (std::filesystem::exists(dir / name)) return dir / name;
  return dir / stem;
}

void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ParameterError(std::string("config: ") + what + " path is not set");
  if (!std::filesystem::exists(p)) throw std::runtime_error(std::string(what) + ": file not found: " + p.string());
}

struct MnistFiles {
  std::filesystem::path train_images, train_labels, test_images, test_labels;
};

MnistFiles mnist_files(const RunConfig& c) {
  MnistFiles f{c.train_images, c.train_labels, c.test_images, c.test_labels};
  if (f.train_images.empty()) f.train_images = resolve_mnist(c.mnist_dir, "train-images-idx3-ubyte");
  if (f.train_labels.empty()) f.train_labels = resolve_mnist(c.mnist_dir, "train-labels-idx1-ubyte");
  if (f.test_images.empty()) f.test_images = resolve_mnist(c.mnist_dir, "t10k-images-idx3-ubyte");
  if (f.test_labels.empty()) f.test_labels = resolve_mnist(c.mnist_dir, "t10k-labels-idx1-ubyte");
  return f;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

double sample_mean(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return v.empty() ? kNaN : 0.0;
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Mnist:
      return "mnist";
    case DatasetKind::Parabola:
      return "parabola";
    case DatasetKind::Blobs:
      return "blobs";
  }
  return "?";
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::M0:
      return "M0";
    case ModelKind::M2:
      return "M2";
    case ModelKind::Parabola1D:
      return "parabola1d";
  }
  return "?";
}

void RunConfig::validate() const {
  optimizer.validate();
  if (epochs < 1) throw ParameterError("config: epochs must be >= 1");
  const bool is_parabola = dataset == DatasetKind::Parabola;
  if (is_parabola != (model == ModelKind::Parabola1D))
    throw ParameterError("config: model parabola1d goes with dataset parabola and only with it");
  if (is_parabola && !(curvature > 0.0)) throw ParameterError("config: curvature must be > 0");
  if (model == ModelKind::M2 && (hidden1 < 1 || hidden2 < 1)) throw ParameterError("config: hidden widths must be >= 1");
  if (dataset == DatasetKind::Blobs) {
    if (blobs_train < 1 || blobs_test < 1 || blobs_features < 1 || blobs_classes < 2)
      throw ParameterError("config: blobs sizes must be positive with at least two classes");
  }
  if (dataset == DatasetKind::Mnist) {
    const auto f = mnist_files(*this);
    require_file(f.train_images, "train_images");
    require_file(f.train_labels, "train_labels");
    require_file(f.test_images, "test_images");
    require_file(f.test_labels, "test_labels");
  }
}

void apply_setting(RunConfig& c, const std::string& key_in, const std::string& value_in) {
  const std::string key = lower(trim(key_in));
  const std::string v = trim(value_in);
  auto& o = c.optimizer;
  if (key == "dataset") {
    const auto l = lower(v);
    if (l == "mnist") c.dataset = DatasetKind::Mnist;
    else if (l == "parabola") c.dataset = DatasetKind::Parabola;
    else if (l == "blobs") c.dataset = DatasetKind::Blobs;
    else throw ParameterError("config: unknown dataset '" + v + "'");
  } else if (key == "model") {
    const auto l = lower(v);
    if (l == "m0") c.model = ModelKind::M0;
    else if (l == "m2") c.model = ModelKind::M2;
    else if (l == "parabola1d") c.model = ModelKind::Parabola1D;
    else throw ParameterError("config: unknown model '" + v + "'");
  } else if (key == "optimizer") o.variant = parse_variant(v);
  else if (key == "eta0") o.eta0 = to_double(key, v);
  else if (key == "momentum") o.momentum = to_double(key, v);
  else if (key == "beta1") o.beta1 = to_double(key, v);
  else if (key == "beta2") o.beta2 = to_double(key, v);
  else if (key == "epsilon") o.epsilon = to_double(key, v);
  else if (key == "alpha") o.alpha = to_double(key, v);
  else if (key == "c") o.gain = to_double(key, v);
  else if (key == "rho") o.rho = to_double(key, v);
  else if (key == "lambda") o.ph_lambda = to_double(key, v);
  else if (key == "ph_threshold") {
    if (v.empty() || lower(v) == "none") o.ph_threshold.reset();
    else if (lower(v) == "inf") o.ph_threshold = std::numeric_limits<double>::infinity();
    else o.ph_threshold = to_double(key, v);
  } else if (key == "ph_warmup") o.ph_warmup_batches = to_uint(key, v);
  else if (key == "layerwise") o.layerwise = to_bool(key, v);
  else if (key == "spalera_layerwise") o.spalera_layerwise = to_bool(key, v);
  else if (key == "epochs") c.epochs = to_uint(key, v);
  else if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "out") c.out_dir = v;
  else if (key == "mnist_dir") c.mnist_dir = v;
  else if (key == "train_images") c.train_images = v;
  else if (key == "train_labels") c.train_labels = v;
  else if (key == "test_images") c.test_images = v;
  else if (key == "test_labels") c.test_labels = v;
  else if (key == "hidden1") c.hidden1 = static_cast<Index>(to_uint(key, v));
  else if (key == "hidden2") c.hidden2 = static_cast<Index>(to_uint(key, v));
  else if (key == "curvature") c.curvature = to_double(key, v);
  else if (key == "theta0") c.theta0 = to_double(key, v);
  else if (key == "blobs_train") c.blobs_train = static_cast<Index>(to_uint(key, v));
  else if (key == "blobs_test") c.blobs_test = static_cast<Index>(to_uint(key, v));
  else if (key == "blobs_features") c.blobs_features = static_cast<Index>(to_uint(key, v));
  else if (key == "blobs_classes") c.blobs_classes = static_cast<int>(to_uint(key, v));
  else if (key == "blobs_spread") c.blobs_spread = to_double(key, v);
  else if (key == "blobs_noise") c.blobs_noise = to_double(key, v);
  else if (key == "data_seed") c.data_seed = to_uint(key, v);
  else if (key == "eval_train") c.eval_train = to_bool(key, v);
  else if (key == "log_batches") c.log_batches = to_bool(key, v);
  else throw ParameterError("config: unknown key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParameterError("config line " + std::to_string(lineno) + ": expected key = value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  try {
    return parse_key_values(f);
  } catch (const ParameterError& e) {
    throw ParameterError(path.string() + ": " + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  for (const auto& [k, v] : read_key_values(path)) apply_setting(c, k, v);
  return c;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const LoadedData> load_data(const RunConfig& c) {
  auto d = std::make_shared<LoadedData>();
  switch (c.dataset) {
    case DatasetKind::Parabola:
      break;
    case DatasetKind::Mnist: {
      const auto f = mnist_files(c);
      auto s = standardize(load_idx(f.train_images, f.train_labels), load_idx(f.test_images, f.test_labels));
      d->train = std::move(s.train);
      d->test = std::move(s.test);
      break;
    }
    case DatasetKind::Blobs: {
      RngStream rng(c.data_seed);
      Dataset all = make_blobs(c.blobs_train + c.blobs_test, c.blobs_features, c.blobs_classes, rng, c.blobs_spread,
                               c.blobs_noise);
      Dataset train{all.inputs.leftCols(c.blobs_train),
                    std::vector<int>(all.labels.begin(), all.labels.begin() + c.blobs_train), "blobs-train"};
      Dataset test{all.inputs.rightCols(c.blobs_test),
                   std::vector<int>(all.labels.begin() + c.blobs_train, all.labels.end()), "blobs-test"};
      auto s = standardize(std::move(train), std::move(test));
      d->train = std::move(s.train);
      d->test = std::move(s.test);
      break;
    }
  }
  return d;
}

MetricsRecord run_training(const RunConfig& cfg, std::shared_ptr<const LoadedData> data) {
  cfg.validate();
  if (!data) data = load_data(cfg);

  MetricsRecord m;
  auto& s = m.summary;
  s.optimizer = std::string(to_string(cfg.optimizer.variant));
  s.model = to_string(cfg.model);
  s.dataset = to_string(cfg.dataset);
  s.eta0 = cfg.optimizer.eta0;
  s.seed = cfg.seed;
  s.epochs = cfg.epochs;

  const RngStream root(cfg.seed);

  auto record_step = [&](const StepReport& r, std::uint64_t epoch) {
    const bool trig = r.verdict == Verdict::Triggered;
    if (!std::isfinite(r.raw_loss)) ++s.nonfinite_losses;
    if (trig) {
      ++s.triggers;
      m.triggers.push_back({r.global_batch, r.ph_gap, r.ph_threshold, r.rates_before, r.rates_after});
    }
    if (cfg.log_batches) m.batches.push_back({r.global_batch, epoch, r.smoothed_loss, r.raw_loss, r.rates_after, r.ph_gap, trig});
  };

  if (cfg.model == ModelKind::Parabola1D) {
    ParabolaObjective obj(make_parabola(cfg.curvature, cfg.theta0));
    FlatVector theta = FlatVector::Constant(1, cfg.theta0);
    Optimizer opt(cfg.optimizer, obj.partition(), theta);
    for (std::uint64_t e = 1; e <= cfg.epochs; ++e) {
      record_step(opt.step(theta, obj, {}), e);
      const double loss = obj.function().loss(theta[0]);
      m.epochs.push_back({e, kNaN, loss, kNaN, loss});
    }
    m.final_theta = theta;
    s.steps = opt.global_batches();
  } else {
    const Index features = data->train.features();
    const Index classes = cfg.dataset == DatasetKind::Blobs ? cfg.blobs_classes : 10;
    const Network shape =
        cfg.model == ModelKind::M0 ? Network::m0(features, classes) : Network::m2(features, cfg.hidden1, cfg.hidden2, classes);
    RngStream init_rng = root.split(1);
    const Network net = init_glorot(shape.layers(), init_rng);
    FlatVector theta = net.parameters();
    NetworkObjective obj(net, data->train);
    MinibatchSchedule schedule(static_cast<std::size_t>(data->train.size()), cfg.optimizer.rho, root.split(2));
    Optimizer opt(cfg.optimizer, net.partition(), theta);
    for (std::uint64_t e = 1; e <= cfg.epochs; ++e) {
      schedule.start_epoch();
      for (std::size_t b = 0; b < schedule.batches_per_epoch(); ++b) record_step(opt.step(theta, obj, schedule.batch(b)), e);
      EpochRow row{e, kNaN, kNaN, 0.0, 0.0};
      if (cfg.eval_train) {
        const auto tr = evaluate(net, theta, data->train);
        row.train_error = tr.error;
        row.train_loss = tr.loss;
      }
      const auto te = evaluate(net, theta, data->test);
      row.test_error = te.error;
      row.test_loss = te.loss;
      m.epochs.push_back(row);
    }
    m.final_theta = theta;
    s.steps = opt.global_batches();
  }

  s.test_error_5 = m.epochs.size() >= 5 ? m.epochs[4].test_error : kNaN;
  s.test_error_20 = m.epochs.size() >= 20 ? m.epochs[19].test_error : kNaN;
  s.final_test_error = m.epochs.back().test_error;
  s.final_test_loss = m.epochs.back().test_loss;
  s.failed = s.final_test_error > 0.8;

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    if (cfg.log_batches) {
      auto f = open_out(cfg.out_dir / "batches.csv");
      write_batches_csv(f, m);
    }
    {
      auto f = open_out(cfg.out_dir / "epochs.csv");
      write_epochs_csv(f, m);
    }
    {
      auto f = open_out(cfg.out_dir / "triggers.csv");
      write_triggers_csv(f, m);
    }
    auto f = open_out(cfg.out_dir / "summary.txt");
    f << summary_line(s);
  }
  return m;
}

void write_batches_csv(std::ostream& out, const MetricsRecord& m) {
  out << "global_batch,epoch,smoothed_loss,raw_loss,eta,ph_gap,trigger\n";
  for (const auto& r : m.batches)
    out << r.global_batch << ',' << r.epoch << ',' << num(r.smoothed_loss) << ',' << num(r.raw_loss) << ','
        << join(r.rates) << ',' << num(r.ph_gap) << ',' << (r.trigger ? 1 : 0) << '\n';
}

void write_epochs_csv(std::ostream& out, const MetricsRecord& m) {
  out << "epoch,train_error,train_loss,test_error,test_loss\n";
  for (const auto& r : m.epochs)
    out << r.epoch << ',' << num(r.train_error) << ',' << num(r.train_loss) << ',' << num(r.test_error) << ','
        << num(r.test_loss) << '\n';
}

void write_triggers_csv(std::ostream& out, const MetricsRecord& m) {
  out << "global_batch,ph_gap,delta,eta_before,eta_after\n";
  for (const auto& r : m.triggers)
    out << r.global_batch << ',' << num(r.ph_gap) << ',' << num(r.delta) << ',' << join(r.rates_before) << ','
        << join(r.rates_after) << '\n';
}

std::string summary_line(const RunSummary& s) {
  std::ostringstream o;
  std::string status = s.status;
  std::replace(status.begin(), status.end(), ' ', '_');
  std::replace(status.begin(), status.end(), '\n', '_');
  o << "optimizer=" << s.optimizer << " model=" << s.model << " dataset=" << s.dataset << " eta0=" << num(s.eta0)
    << " seed=" << s.seed << " epochs=" << s.epochs << " steps=" << s.steps << " triggers=" << s.triggers
    << " nonfinite_losses=" << s.nonfinite_losses << " test_error_5=" << num(s.test_error_5)
    << " test_error_20=" << num(s.test_error_20) << " final_test_error=" << num(s.final_test_error)
    << " final_test_loss=" << num(s.final_test_loss) << " failed=" << (s.failed ? 1 : 0) << " status=" << status
    << '\n';
  return o.str();
}

// ---------------------------------------------------------------------------

std::vector<std::string> default_eta_grid() { return {"1e-5", "1e-4", "1e-3", "1e-2", "1e-1", "1"}; }

GridSpec parse_grid_spec(std::istream& in) {
  GridSpec g;
  for (auto& [k, v] : parse_key_values(in)) {
    if (k.rfind("sweep.", 0) == 0) {
      std::vector<std::string> values;
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) values.push_back(item);
      }
      if (values.empty()) throw ParameterError("grid: sweep '" + k + "' has no values");
      g.sweeps.emplace_back(k.substr(6), std::move(values));
    } else {
      g.base.emplace_back(k, v);
    }
  }
  const bool has_eta = std::any_of(g.sweeps.begin(), g.sweeps.end(), [](const auto& s) { return lower(s.first) == "eta0"; });
  if (!has_eta) g.sweeps.emplace_back("eta0", default_eta_grid());
  return g;
}

GridSpec load_grid_spec(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return parse_grid_spec(f);
}

GridResult run_grid(const GridSpec& spec, std::size_t seeds, unsigned jobs, const std::filesystem::path& out_dir) {
  if (seeds < 1) throw ParameterError("grid: at least one seed required");

  // Cartesian product, first sweep outermost.
  std::vector<std::vector<std::pair<std::string, std::string>>> cells(1);
  for (const auto& [key, values] : spec.sweeps) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& cell : cells)
      for (const auto& v : values) {
        auto c = cell;
        c.emplace_back(key, v);
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }

  GridResult result;
  result.cells.resize(cells.size());
  std::vector<RunConfig> configs(cells.size());
  std::vector<std::string> config_errors(cells.size());
  std::uint64_t first_seed = 1;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto& cell = result.cells[i];
    cell.settings = cells[i];
    cell.runs.resize(seeds);
    try {
      for (const auto& [k, v] : spec.base) apply_setting(configs[i], k, v);
      for (const auto& [k, v] : cells[i]) apply_setting(configs[i], k, v);
    } catch (const std::exception& e) {
      config_errors[i] = e.what();
    }
    if (i == 0) first_seed = configs[0].seed;
    cell.optimizer = std::string(to_string(configs[i].optimizer.variant));
    cell.model = to_string(configs[i].model);
  }

  // Datasets are loaded once per distinct data source and shared read-only.
  std::mutex data_mutex;
  std::map<std::string, std::shared_ptr<const LoadedData>> data_cache;
  auto data_for = [&](const RunConfig& c) {
    std::ostringstream key;
    key << to_string(c.dataset);
    if (c.dataset == DatasetKind::Mnist) {
      const auto f = mnist_files(c);
      key << '|' << f.train_images << '|' << f.train_labels << '|' << f.test_images << '|' << f.test_labels;
    } else if (c.dataset == DatasetKind::Blobs) {
      key << '|' << c.blobs_train << '|' << c.blobs_test << '|' << c.blobs_features << '|' << c.blobs_classes << '|'
          << num(c.blobs_spread) << '|' << num(c.blobs_noise) << '|' << c.data_seed;
    }
    std::lock_guard lock(data_mutex);
    auto& slot = data_cache[key.str()];
    if (!slot) slot = load_data(c);
    return slot;
  };

  const std::size_t total = cells.size() * seeds;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job; (job = next.fetch_add(1)) < total;) {
      const std::size_t ci = job / seeds, si = job % seeds;
      RunSummary& out = result.cells[ci].runs[si];
      RunConfig c = configs[ci];
      c.seed = first_seed + si;
      out.optimizer = result.cells[ci].optimizer;
      out.model = result.cells[ci].model;
      out.dataset = to_string(c.dataset);
      out.eta0 = c.optimizer.eta0;
      out.seed = c.seed;
      out.epochs = c.epochs;
      try {
        if (!config_errors[ci].empty()) throw ParameterError(config_errors[ci]);
        c.out_dir = out_dir.empty() ? std::filesystem::path{}
                                    : out_dir / ("cell" + std::to_string(ci) + "_seed" + std::to_string(c.seed));
        c.log_batches = c.log_batches && !out_dir.empty();
        out = run_training(c, data_for(c)).summary;
      } catch (const std::exception& e) {
        out.status = std::string("error: ") + e.what();
        out.failed = true;
        out.final_test_error = out.test_error_5 = out.test_error_20 = out.final_test_loss = kNaN;
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(total)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  // Aggregation.
  std::map<std::string, FailureRate> rates;
  std::vector<std::string> rate_order;
  for (auto& cell : result.cells) {
    std::vector<double> e5, e20, ef;
    for (const auto& r : cell.runs) {
      const bool ok = r.status == "ok";
      if (ok) {
        ++cell.completed;
        e5.push_back(r.test_error_5);
        e20.push_back(r.test_error_20);
        ef.push_back(r.final_test_error);
      }
      if (r.failed) ++cell.failed;
    }
    cell.mean_error_5 = sample_mean(e5);
    cell.std_error_5 = sample_std(e5);
    cell.mean_error_20 = sample_mean(e20);
    cell.std_error_20 = sample_std(e20);
    cell.mean_final = sample_mean(ef);
    cell.std_final = sample_std(ef);
    if (!rates.count(cell.optimizer)) rate_order.push_back(cell.optimizer);
    auto& fr = rates[cell.optimizer];
    fr.optimizer = cell.optimizer;
    fr.runs += cell.runs.size();
    fr.failed += cell.failed;
  }
  for (const auto& o : rate_order) result.failure_rates.push_back(rates[o]);

  // Best cell per (model, optimizer, mark), then per (model, mark) across
  // optimizers (reported with optimizer "*").
  for (int mark : {5, 20}) {
    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& c : result.cells) {
      for (const auto& k : {std::pair{c.model, c.optimizer}, std::pair{c.model, std::string("*")}})
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    for (const auto& [model, opt] : keys) {
      BestCell best{model, opt, mark, 0, kNaN, kNaN};
      for (std::size_t i = 0; i < result.cells.size(); ++i) {
        const auto& c = result.cells[i];
        if (c.model != model || (opt != "*" && c.optimizer != opt)) continue;
        const double mean = mark == 5 ? c.mean_error_5 : c.mean_error_20;
        if (std::isfinite(mean) && !(mean >= best.mean)) {
          best.cell = i;
          best.mean = mean;
          best.std = mark == 5 ? c.std_error_5 : c.std_error_20;
        }
      }
      if (std::isfinite(best.mean)) result.best.push_back(best);
    }
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    {
      auto f = open_out(out_dir / "grid_runs.txt");
      for (std::size_t i = 0; i < result.cells.size(); ++i)
        for (const auto& r : result.cells[i].runs) f << "cell=" << i << ' ' << summary_line(r);
    }
    {
      auto f = open_out(out_dir / "grid_cells.csv");
      write_grid_cells_csv(f, result);
    }
    auto f = open_out(out_dir / "grid_best.csv");
    f << "model,optimizer,epoch_mark,cell,mean_test_error,std_test_error\n";
    for (const auto& b : result.best)
      f << b.model << ',' << b.optimizer << ',' << b.epoch_mark << ',' << b.cell << ',' << num(b.mean) << ','
        << num(b.std) << '\n';
    f << "\noptimizer,runs,failed,failed_rate\n";
    for (const auto& r : result.failure_rates)
      f << r.optimizer << ',' << r.runs << ',' << r.failed << ',' << num(r.rate()) << '\n';
  }
  return result;
}

void write_grid_cells_csv(std::ostream& out, const GridResult& g) {
  out << "cell,optimizer,model,settings,runs,completed,failed,mean_error_5,std_error_5,mean_error_20,std_error_20,"
         "mean_final,std_final\n";
  for (std::size_t i = 0; i < g.cells.size(); ++i) {
    const auto& c = g.cells[i];
    std::string settings;
    for (const auto& [k, v] : c.settings) settings += (settings.empty() ? "" : ";") + k + "=" + v;
    out << i << ',' << c.optimizer << ',' << c.model << ',' << settings << ',' << c.runs.size() << ',' << c.completed
        << ',' << c.failed << ',' << num(c.mean_error_5) << ',' << num(c.std_error_5) << ',' << num(c.mean_error_20)
        << ',' << num(c.std_error_20) << ',' << num(c.mean_final) << ',' << num(c.std_final) << '\n';
  }
}

// ---------------------------------------------------------------------------

bool print_checks(std::ostream& out, const std::vector<Check>& checks) {
  bool all = true;
  for (const auto& c : checks) {
    out << (c.pass ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << ' ' << c.detail;
    out << '\n';
    all = all && c.pass;
  }
  return all;
}

std::vector<Check> verify_moments(std::uint64_t n_reps, std::uint64_t seed, unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const std::vector<double> alphas{0.01, 0.1, 0.25};
  const std::vector<Index> dims{10, 100, 1000};
  const std::vector<std::uint64_t> ts{2, 10, 100};
  constexpr double kMeanSigmas = 4.0;
  constexpr double kVarRelTol = 0.10;

  std::vector<Check> checks;
  for (double a : alphas) {
    const bool mean_exact = mean_t(a, 1) == a * a;
    bool var_exact = true;
    for (Index d : dims) var_exact = var_exact && var_t(a, d, 1) == 0.0;
    const auto mc = monte_carlo_rt(a, 10, 1, 100, RngStream(seed).split(0));
    checks.push_back({"moments.t1[alpha=" + num(a) + "]", mean_exact && var_exact && mc.var_est == 0.0,
                      "mean_t_exact=" + std::to_string(mean_exact) + " var_t_zero=" + std::to_string(var_exact) +
                          " mc_var=" + num(mc.var_est)});
  }
  RngStream root(seed);
  for (Index d : dims) {
    const auto est = monte_carlo_rt_grid(alphas, d, ts, n_reps, root.split(static_cast<std::uint64_t>(d)), threads);
    for (const auto& e : est) {
      const double m = mean_t(e.alpha, e.t);
      const double v = var_t(e.alpha, e.d, e.t);
      const double ve = exact_var_t(e.alpha, e.d, e.t);
      const double z = (e.mean_est - m) / e.stderr_mean;
      const bool mean_ok = std::abs(e.mean_est - m) <= kMeanSigmas * e.stderr_mean;
      const bool var_ok = std::abs(e.var_est / v - 1.0) <= kVarRelTol;
      std::ostringstream det;
      det << "mean_est=" << num(e.mean_est) << " mean_t=" << num(m) << " z=" << num(z) << " mean_ok=" << mean_ok
          << " var_est=" << num(e.var_est) << " var_t=" << num(v) << " var_ratio=" << num(e.var_est / v)
          << " var_ok=" << var_ok << " exact_var=" << num(ve) << " exact_ratio=" << num(e.var_est / ve);
      checks.push_back({"moments[alpha=" + num(e.alpha) + ",d=" + std::to_string(e.d) + ",t=" + std::to_string(e.t) + "]",
                        mean_ok && var_ok, det.str()});
    }
  }
  return checks;
}

std::vector<Check> verify_zeta() {
  constexpr double kHandTol = 1e-4;
  std::vector<Check> checks;
  const auto grid = zeta_grid(1.05, 20.0, 0.01);
  for (double c : {1e-3, 1e-2, 1e-1}) {
    const auto curve = argmin_J(c, grid);
    const bool ok = curve.zeta_star > 3.0 && curve.zeta_star < 5.0 && curve.cost_star <= cost_J(2.0, c);
    checks.push_back({"zeta.argmin[C=" + num(c) + "]", ok,
                      "zeta_star=" + num(curve.zeta_star) + " J_star=" + num(curve.cost_star) +
                          " J2=" + num(cost_J(2.0, c))});
  }
  const double j2 = cost_J(2.0, 0.01), j4 = cost_J(4.0, 0.01);
  checks.push_back({"zeta.J2_J4[C=0.01]",
                    j4 < j2 && std::abs(j2 - 0.20757) <= kHandTol && std::abs(j4 - 0.16155) <= kHandTol,
                    "J2=" + num(j2) + " J4=" + num(j4)});
  return checks;
}

std::vector<Check> verify_gradcheck(std::uint64_t seed) {
  constexpr double kRelTol = 1e-6;
  std::vector<Check> checks;
  RngStream rng(seed);
  const Index features = 12, batch = 16;
  const int classes = 5;
  Eigen::MatrixXd x(features, batch);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  std::vector<int> y(batch);
  for (auto& l : y) l = static_cast<int>(rng.uniform_index(classes));

  const std::vector<std::pair<std::string, Network>> nets{
      {"M0", Network::m0(features, classes)}, {"M2", Network::m2(features, 9, 7, classes)}};
  for (const auto& [name, shape] : nets) {
    Network net = init_glorot(shape.layers(), rng);
    for (std::size_t k = 0; k < net.layers().size(); ++k)
      for (Index i = 0; i < net.bias(k).size(); ++i) net.bias(k)[i] = 0.1 * rng.normal();
    const auto r = gradient_check(net, x, y);
    checks.push_back({"gradcheck[" + name + "]", r.max_rel_error < kRelTol,
                      "parameters=" + std::to_string(r.parameters) + " max_rel_error=" + num(r.max_rel_error) +
                          " max_abs_error=" + num(r.max_abs_error) + " worst_index=" + std::to_string(r.worst_index)});
  }
  return checks;
}

}  // namespace salera
