#include "dfa/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>

namespace dfa {

std::string_view to_string(LossKind loss) {
  return loss == LossKind::kSquaredError ? "squared_error" : "cross_entropy";
}

namespace {

LossKind parse_loss(std::string_view name) {
  if (name == "squared_error") return LossKind::kSquaredError;
  if (name == "cross_entropy") return LossKind::kCrossEntropy;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown loss '" + std::string(name) + "' (allowed: squared_error, cross_entropy)");
}

// Observation minus the domain background, restricted to differing entries.
struct SparseDelta {
  std::vector<std::uint32_t> index;
  std::vector<float> value;
};

SparseDelta delta_of(const Observation& obs, const Observation& background) {
  SparseDelta d;
  const auto x = obs.raster();
  const auto r = background.raster();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == r[i]) continue;
    d.index.push_back(static_cast<std::uint32_t>(i));
    d.value.push_back((static_cast<float>(x[i]) - static_cast<float>(r[i])) / 255.0f);
  }
  return d;
}

struct BackgroundPixels {
  std::vector<std::uint32_t> index;
  std::vector<float> value;
};

const BackgroundPixels& background_pixels(Domain domain) {
  static const auto build = [](Domain d) {
    BackgroundPixels px;
    const auto r = background_frame(d).raster();
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i] == 0) continue;
      px.index.push_back(static_cast<std::uint32_t>(i));
      px.value.push_back(static_cast<float>(r[i]) / 255.0f);
    }
    return px;
  };
  static const BackgroundPixels nav = build(Domain::kNav2d);
  static const BackgroundPixels grid = build(Domain::kDoorKey);
  return domain == Domain::kNav2d ? nav : grid;
}

template <class T>
void background_preactivation(const Network<T>& net, std::vector<T>& out) {
  const std::size_t hidden = net.arch.hidden;
  out.assign(hidden, T(0));
  const BackgroundPixels& px = background_pixels(net.arch.domain);
  for (std::size_t n = 0; n < px.index.size(); ++n) {
    const T v = static_cast<T>(px.value[n]);
    const T* row = &net.w1[static_cast<std::size_t>(px.index[n]) * hidden];
    for (std::size_t j = 0; j < hidden; ++j) out[j] += v * row[j];
  }
}

template <class T>
struct Activations {
  std::vector<T> hidden;
  std::vector<T> out;
};

template <class T>
void forward(const Network<T>& net, std::span<const T> background, const SparseDelta& d, Activations<T>& a) {
  const std::size_t hidden = net.arch.hidden;
  const std::size_t output = net.arch.output;
  a.hidden.resize(hidden);
  for (std::size_t j = 0; j < hidden; ++j) a.hidden[j] = net.b1[j] + background[j];
  for (std::size_t n = 0; n < d.index.size(); ++n) {
    const T v = static_cast<T>(d.value[n]);
    const T* row = &net.w1[static_cast<std::size_t>(d.index[n]) * hidden];
    for (std::size_t j = 0; j < hidden; ++j) a.hidden[j] += v * row[j];
  }
  for (T& h : a.hidden) h = std::tanh(h);
  a.out.assign(net.b2.begin(), net.b2.end());
  for (std::size_t j = 0; j < hidden; ++j) {
    const T h = a.hidden[j];
    const T* row = &net.w2[j * output];
    for (std::size_t k = 0; k < output; ++k) a.out[k] += h * row[k];
  }
}

// Loss of one sample and its gradient with respect to the output layer.
template <class T>
T loss_and_grad(LossKind loss, std::span<const T> out, const Action& target, std::span<T> dout) {
  if (loss == LossKind::kSquaredError) {
    const Move& m = std::get<Move>(target);
    const T t[2] = {static_cast<T>(m.dx / nav2d::kMaxStep), static_cast<T>(m.dy / nav2d::kMaxStep)};
    T total = 0;
    for (std::size_t k = 0; k < 2; ++k) {
      const T e = out[k] - t[k];
      total += e * e;
      dout[k] = e;  // derivative of the two-component mean
    }
    return total / T(2);
  }
  const std::size_t y = static_cast<std::size_t>(std::get<GridAction>(target));
  const T peak = *std::max_element(out.begin(), out.end());
  T z = 0;
  for (std::size_t k = 0; k < out.size(); ++k) z += std::exp(out[k] - peak);
  for (std::size_t k = 0; k < out.size(); ++k) dout[k] = std::exp(out[k] - peak) / z - (k == y ? T(1) : T(0));
  return std::log(z) - (out[y] - peak);
}

template <class T>
struct Gradients {
  std::vector<T> w1;  // only rows flagged in `touched` are nonzero
  std::vector<T> b1;
  std::vector<T> w2;
  std::vector<T> b2;
  std::vector<T> background;  // summed hidden delta, applied to background pixels
  std::vector<std::uint8_t> touched;
  std::vector<std::uint32_t> rows;

  explicit Gradients(const Architecture& arch)
      : w1(arch.input * arch.hidden, T(0)),
        b1(arch.hidden, T(0)),
        w2(arch.hidden * arch.output, T(0)),
        b2(arch.output, T(0)),
        background(arch.hidden, T(0)),
        touched(arch.input, 0) {}
};

template <class T>
void backward(const Network<T>& net, const SparseDelta& d, const Activations<T>& a, std::span<const T> dout,
              Gradients<T>& g) {
  const std::size_t hidden = net.arch.hidden;
  const std::size_t output = net.arch.output;
  std::vector<T> dpre(hidden, T(0));
  for (std::size_t k = 0; k < output; ++k) g.b2[k] += dout[k];
  for (std::size_t j = 0; j < hidden; ++j) {
    const T h = a.hidden[j];
    const T* w = &net.w2[j * output];
    T* gw = &g.w2[j * output];
    T back = 0;
    for (std::size_t k = 0; k < output; ++k) {
      gw[k] += h * dout[k];
      back += w[k] * dout[k];
    }
    dpre[j] = back * (T(1) - h * h);
  }
  for (std::size_t j = 0; j < hidden; ++j) {
    g.b1[j] += dpre[j];
    g.background[j] += dpre[j];
  }
  for (std::size_t n = 0; n < d.index.size(); ++n) {
    const std::size_t i = d.index[n];
    const T v = static_cast<T>(d.value[n]);
    if (!g.touched[i]) {
      g.touched[i] = 1;
      g.rows.push_back(static_cast<std::uint32_t>(i));
    }
    T* row = &g.w1[i * hidden];
    for (std::size_t j = 0; j < hidden; ++j) row[j] += v * dpre[j];
  }
}

// Plain SGD step with the batch-mean gradient; clears `g`.
template <class T>
void apply_step(Network<T>& net, Gradients<T>& g, T rate) {
  const std::size_t hidden = net.arch.hidden;
  for (std::size_t k = 0; k < net.b2.size(); ++k) net.b2[k] -= rate * g.b2[k];
  for (std::size_t n = 0; n < net.w2.size(); ++n) net.w2[n] -= rate * g.w2[n];
  for (std::size_t j = 0; j < hidden; ++j) net.b1[j] -= rate * g.b1[j];
  const BackgroundPixels& px = background_pixels(net.arch.domain);
  for (std::size_t n = 0; n < px.index.size(); ++n) {
    const T v = static_cast<T>(px.value[n]);
    T* row = &net.w1[static_cast<std::size_t>(px.index[n]) * hidden];
    for (std::size_t j = 0; j < hidden; ++j) row[j] -= rate * v * g.background[j];
  }
  std::sort(g.rows.begin(), g.rows.end());
  for (std::uint32_t i : g.rows) {
    T* row = &net.w1[static_cast<std::size_t>(i) * hidden];
    T* grad = &g.w1[static_cast<std::size_t>(i) * hidden];
    for (std::size_t j = 0; j < hidden; ++j) {
      row[j] -= rate * grad[j];
      grad[j] = T(0);
    }
    g.touched[i] = 0;
  }
  g.rows.clear();
  std::fill(g.b1.begin(), g.b1.end(), T(0));
  std::fill(g.w2.begin(), g.w2.end(), T(0));
  std::fill(g.b2.begin(), g.b2.end(), T(0));
  std::fill(g.background.begin(), g.background.end(), T(0));
}

void check_shape(const Architecture& arch, const Observation& obs) {
  if (obs.size() != arch.input) {
    throw Error(ErrorCode::kShapeMismatch, "observation has " + std::to_string(obs.size()) + " values, policy expects " +
                                               std::to_string(arch.input));
  }
}

void check_target(const Architecture& arch, const Action& target) {
  const bool continuous = std::holds_alternative<Move>(target);
  if (continuous != (arch.domain == Domain::kNav2d)) {
    throw Error(ErrorCode::kDomainMismatch, "demonstration action type does not match the policy domain");
  }
}

Network<double> widen(const Network<float>& net) {
  auto cast = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };
  return {net.arch, cast(net.w1), cast(net.b1), cast(net.w2), cast(net.b2)};
}

double sample_loss(const Network<double>& net, LossKind loss, const SparseDelta& d, const Action& target) {
  std::vector<double> background;
  background_preactivation(net, background);
  Activations<double> a;
  forward<double>(net, background, d, a);
  std::vector<double> dout(net.arch.output);
  return loss_and_grad<double>(loss, a.out, target, dout);
}

}  // namespace

Architecture architecture_for(Domain domain, std::size_t hidden) {
  return {domain, Observation::kSize, hidden, domain == Domain::kNav2d ? std::size_t{2} : kGridActionCount};
}

Json to_json(const Architecture& arch) {
  return {{"domain", to_string(arch.domain)},
          {"input", arch.input},
          {"hidden", arch.hidden},
          {"output", arch.output},
          {"activation", "tanh"},
          {"loss", to_string(arch.loss())}};
}

Architecture architecture_from_json(const Json& j) {
  Architecture arch;
  arch.domain = parse_domain(j.at("domain").get<std::string>());
  arch.input = j.at("input").get<std::size_t>();
  arch.hidden = j.at("hidden").get<std::size_t>();
  arch.output = j.at("output").get<std::size_t>();
  if (arch != architecture_for(arch.domain, arch.hidden) || arch.hidden == 0) {
    throw Error(ErrorCode::kShapeMismatch, "architecture does not match its domain");
  }
  return arch;
}

const Observation& background_frame(Domain domain) {
  static const Observation nav;
  static const Observation grid = [] {
    SceneDescriptor scene;
    scene.domain = Domain::kDoorKey;
    scene.objects.resize(schema_for(Domain::kDoorKey).object_count());
    scene.objects[doorkey::kDoor].pos = doorkey::kDoorCell;
    return render(WorldState{scene, 0});
  }();
  return domain == Domain::kNav2d ? nav : grid;
}

PolicyParams::PolicyParams(Network<float> net, std::uint64_t seed) : net_(std::move(net)), seed_(seed) {
  const Architecture& a = net_.arch;
  if (net_.w1.size() != a.input * a.hidden || net_.b1.size() != a.hidden || net_.w2.size() != a.hidden * a.output ||
      net_.b2.size() != a.output) {
    throw Error(ErrorCode::kShapeMismatch, "tensor shapes do not match the architecture");
  }
  for (const auto* t : {&net_.w1, &net_.b1, &net_.w2, &net_.b2}) {
    if (!std::all_of(t->begin(), t->end(), [](float v) { return std::isfinite(v); })) {
      throw Error(ErrorCode::kNumerical, "policy parameters contain non-finite values");
    }
  }
  background_preactivation(net_, background_);
}

PolicyParams init_policy(const Architecture& arch, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {tag("policy-init")}));
  auto fill = [&](std::size_t n, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>((2.0 * uniform_unit(rng) - 1.0) * bound);
    return v;
  };
  Network<float> net;
  net.arch = arch;
  net.w1 = fill(arch.input * arch.hidden, arch.input);
  net.b1.assign(arch.hidden, 0.0f);
  net.w2 = fill(arch.hidden * arch.output, arch.hidden);
  net.b2.assign(arch.output, 0.0f);
  return PolicyParams(std::move(net), seed);
}

Action predict(const PolicyParams& params, const Observation& obs) {
  check_shape(params.arch(), obs);
  Activations<float> a;
  forward<float>(params.network(), params.background_activation(), delta_of(obs, background_frame(params.arch().domain)),
                 a);
  if (params.arch().domain == Domain::kNav2d) {
    auto scale = [](float v) {
      return std::clamp(static_cast<double>(v) * nav2d::kMaxStep, -nav2d::kMaxStep, nav2d::kMaxStep);
    };
    return Move{scale(a.out[0]), scale(a.out[1])};
  }
  // max_element returns the first maximum, i.e. the lowest token index.
  const auto best = std::max_element(a.out.begin(), a.out.end());
  return static_cast<GridAction>(best - a.out.begin());
}

PolicyFn policy_fn(std::shared_ptr<const PolicyParams> params) {
  return [params = std::move(params)](const Observation& obs) { return predict(*params, obs); };
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
  }
  if (epochs < (finetune ? 0 : 1)) throw Error(ErrorCode::kInvalidArgument, "epochs must be at least 1");
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
}

Json to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"epochs", cfg.epochs}, {"batch_size", cfg.batch_size},
          {"seed", cfg.seed},                   {"loss", to_string(cfg.loss)}, {"finetune", cfg.finetune}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.loss = parse_loss(j.value("loss", std::string(to_string(cfg.loss))));
  cfg.finetune = j.value("finetune", cfg.finetune);
  cfg.validate();
  return cfg;
}

TrainConfig default_train_config(Domain domain) {
  TrainConfig cfg;
  if (domain == Domain::kNav2d) {
    cfg.learning_rate = 0.1;
    cfg.epochs = 300;
    cfg.batch_size = 8;
    cfg.loss = LossKind::kSquaredError;
  } else {
    cfg.learning_rate = 0.05;
    cfg.epochs = 300;
    cfg.batch_size = 16;
    cfg.loss = LossKind::kCrossEntropy;
  }
  return cfg;
}

std::vector<Sample> samples_of(std::span<const Trajectory> demos) {
  std::vector<Sample> out;
  for (const Trajectory& d : demos) {
    for (const TrajectoryStep& s : d.steps) out.push_back({&s.obs, s.action});
  }
  return out;
}

TrainResult train_bc(const PolicyParams& params, std::span<const Trajectory> demos, const TrainConfig& cfg) {
  cfg.validate();
  const Architecture& arch = params.arch();
  if (cfg.loss != arch.loss()) throw Error(ErrorCode::kInvalidArgument, "loss kind does not match the policy head");
  if (demos.empty()) throw Error(ErrorCode::kInvalidArgument, "training needs at least one demonstration");
  for (const Trajectory& d : demos) {
    if (d.domain() != arch.domain) throw Error(ErrorCode::kDomainMismatch, "demonstrations span several domains");
  }

  const std::vector<Sample> samples = samples_of(demos);
  std::vector<SparseDelta> inputs;
  inputs.reserve(samples.size());
  for (const Sample& s : samples) {
    check_shape(arch, *s.obs);
    check_target(arch, s.target);
    inputs.push_back(delta_of(*s.obs, background_frame(arch.domain)));
  }

  Network<float> net = params.network();
  Gradients<float> grads(arch);
  Activations<float> act;
  std::vector<float> background;
  std::vector<float> dout(arch.output);
  std::vector<std::size_t> order(samples.size());
  TrainResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {tag("shuffle"), static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      background_preactivation(net, background);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t n = order[b];
        forward<float>(net, background, inputs[n], act);
        const float loss = loss_and_grad<float>(cfg.loss, act.out, samples[n].target, dout);
        if (!std::isfinite(loss)) {
          throw Error(ErrorCode::kNumerical, "non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                                 std::to_string(n) + " (learning rate " +
                                                 std::to_string(cfg.learning_rate) + ")");
        }
        epoch_loss += loss;
        backward<float>(net, inputs[n], act, dout, grads);
      }
      apply_step(net, grads, static_cast<float>(cfg.learning_rate / static_cast<double>(stop - start)));
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  result.params = PolicyParams(std::move(net), params.seed());
  return result;
}

TrainResult finetune(const PolicyParams& params, std::span<const Trajectory> demos, const TrainConfig& cfg) {
  TrainConfig warm = cfg;
  warm.finetune = true;
  if (warm.epochs == 0) {
    warm.validate();
    return {params, {}};
  }
  return train_bc(params, demos, warm);
}

double evaluate_loss(const PolicyParams& params, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  Activations<float> act;
  std::vector<float> dout(params.arch().output);
  double total = 0.0;
  for (const Sample& s : samples) {
    check_target(params.arch(), s.target);
    forward<float>(params.network(), params.background_activation(),
                   delta_of(*s.obs, background_frame(params.arch().domain)), act);
    total += loss_and_grad<float>(params.arch().loss(), act.out, s.target, dout);
  }
  return total / static_cast<double>(samples.size());
}

double grad_check(const PolicyParams& params, const Sample& sample, std::uint64_t seed, std::size_t coordinates) {
  const Architecture& arch = params.arch();
  check_shape(arch, *sample.obs);
  check_target(arch, sample.target);
  Network<double> net = widen(params.network());
  const SparseDelta d = delta_of(*sample.obs, background_frame(arch.domain));
  const LossKind loss = arch.loss();

  std::vector<double> background;
  background_preactivation(net, background);
  Activations<double> act;
  forward<double>(net, background, d, act);
  std::vector<double> dout(arch.output);
  loss_and_grad<double>(loss, act.out, sample.target, dout);
  Gradients<double> g(arch);
  backward<double>(net, d, act, dout, g);

  // Analytic gradient of a w1 entry: background and delta contributions.
  const BackgroundPixels& px = background_pixels(arch.domain);
  std::vector<double> background_value(arch.input, 0.0);
  for (std::size_t n = 0; n < px.index.size(); ++n) background_value[px.index[n]] = px.value[n];
  auto w1_grad = [&](std::size_t i, std::size_t j) {
    return background_value[i] * g.background[j] + g.w1[i * arch.hidden + j];
  };

  // Candidate rows are the pixels that are lit in this sample.
  std::vector<std::size_t> rows;
  const auto raster = sample.obs->raster();
  for (std::size_t i = 0; i < raster.size(); ++i) {
    if (raster[i] != 0) rows.push_back(i);
  }

  struct Coordinate {
    std::vector<double>* tensor;
    std::size_t index;
    double analytic;
  };
  std::vector<Coordinate> coords;
  Rng rng(derive_seed(seed, {tag("grad-check")}));
  for (std::size_t n = 0; n < coordinates; ++n) {
    if (n % 2 == 0 && !rows.empty()) {
      const std::size_t i = rows[uniform_index(rng, rows.size())];
      const std::size_t j = uniform_index(rng, arch.hidden);
      coords.push_back({&net.w1, i * arch.hidden + j, w1_grad(i, j)});
    } else {
      const std::size_t k = uniform_index(rng, net.w2.size());
      coords.push_back({&net.w2, k, g.w2[k]});
    }
  }
  for (std::size_t j = 0; j < arch.hidden; ++j) coords.push_back({&net.b1, j, g.b1[j]});
  for (std::size_t k = 0; k < arch.output; ++k) coords.push_back({&net.b2, k, g.b2[k]});

  constexpr double kStep = 1e-4;
  double worst = 0.0;
  for (const Coordinate& c : coords) {
    double& w = (*c.tensor)[c.index];
    const double saved = w;
    w = saved + kStep;
    const double up = sample_loss(net, loss, d, sample.target);
    w = saved - kStep;
    const double down = sample_loss(net, loss, d, sample.target);
    w = saved;
    const double numeric = (up - down) / (2.0 * kStep);
    const double scale = std::max(std::abs(numeric), std::abs(c.analytic));
    const double err = scale < 1e-7 ? std::abs(numeric - c.analytic) : std::abs(numeric - c.analytic) / scale;
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

constexpr char kMagic[8] = {'D', 'F', 'A', 'P', 'O', 'L', '0', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw Error(ErrorCode::kIo, "truncated checkpoint");
  return static_cast<std::uint32_t>(bytes[0]) | static_cast<std::uint32_t>(bytes[1]) << 8 |
         static_cast<std::uint32_t>(bytes[2]) << 16 | static_cast<std::uint32_t>(bytes[3]) << 24;
}

void write_tensor(std::ostream& out, const std::vector<float>& t) {
  for (float v : t) write_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::vector<float> read_tensor(std::istream& in, std::size_t n) {
  std::vector<float> t(n);
  for (float& v : t) v = std::bit_cast<float>(read_u32(in));
  return t;
}

Json tensor_json(const std::vector<float>& t, std::size_t rows, std::size_t cols) {
  Json out = Json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    out.push_back(Json(std::vector<float>(t.begin() + static_cast<std::ptrdiff_t>(r * cols),
                                          t.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols))));
  }
  return out;
}

}  // namespace

void save_checkpoint(std::ostream& out, const PolicyParams& params) {
  Json header = to_json(params.arch());
  header["seed"] = params.seed();
  const std::string text = header.dump();
  out.write(kMagic, sizeof kMagic);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const Network<float>& net = params.network();
  write_tensor(out, net.w1);
  write_tensor(out, net.b1);
  write_tensor(out, net.w2);
  write_tensor(out, net.b2);
  if (!out) throw Error(ErrorCode::kIo, "failed to write checkpoint");
}

PolicyParams load_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorCode::kIo, "not a policy checkpoint");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kIo, "unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(read_u32(in), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text.size()))) throw Error(ErrorCode::kIo, "truncated checkpoint");
  const Json header = Json::parse(text);
  Network<float> net;
  net.arch = architecture_from_json(header);
  net.w1 = read_tensor(in, net.arch.input * net.arch.hidden);
  net.b1 = read_tensor(in, net.arch.hidden);
  net.w2 = read_tensor(in, net.arch.hidden * net.arch.output);
  net.b2 = read_tensor(in, net.arch.output);
  return PolicyParams(std::move(net), header.at("seed").get<std::uint64_t>());
}

Json weights_to_json(const PolicyParams& params) {
  const Network<float>& net = params.network();
  const Architecture& a = net.arch;
  return {{"architecture", to_json(a)},
          {"seed", params.seed()},
          {"w1", tensor_json(net.w1, a.input, a.hidden)},
          {"b1", net.b1},
          {"w2", tensor_json(net.w2, a.hidden, a.output)},
          {"b2", net.b2}};
}

}  // namespace dfa
