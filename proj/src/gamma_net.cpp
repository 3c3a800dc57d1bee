#include "ecocruise/gamma_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ecocruise/errors.hpp"
#include "ecocruise/random.hpp"

namespace ecocruise {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MinMaxScaler MinMaxScaler::fit(const MatrixXd& rows) {
  if (rows.rows() == 0) throw std::invalid_argument("cannot fit a scaler on no samples");
  MinMaxScaler s;
  s.min = rows.colwise().minCoeff().transpose();
  s.range = rows.colwise().maxCoeff().transpose() - s.min;
  for (Index i = 0; i < s.range.size(); ++i)
    if (!(s.range[i] > 0.0)) s.range[i] = 1.0;
  return s;
}

VectorXd MinMaxScaler::scale(const VectorXd& x) const { return (x - min).cwiseQuotient(range); }
VectorXd MinMaxScaler::unscale(const VectorXd& z) const { return z.cwiseProduct(range) + min; }

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset d;
  d.features.resize(static_cast<Index>(idx.size()), features.cols());
  d.target.resize(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto r = static_cast<Index>(idx[i]);
    d.features.row(static_cast<Index>(i)) = features.row(r);
    d.target[static_cast<Index>(i)] = target[r];
    d.positions.push_back(positions.empty() ? idx[i] : positions[idx[i]]);
  }
  return d;
}

void Dataset::append(const Dataset& other) {
  if (size() == 0) {
    *this = other;
    return;
  }
  if (other.features.cols() != features.cols()) throw std::invalid_argument("dataset feature widths differ");
  MatrixXd f(features.rows() + other.features.rows(), features.cols());
  f << features, other.features;
  VectorXd t(target.size() + other.target.size());
  t << target, other.target;
  features = std::move(f);
  target = std::move(t);
  positions.insert(positions.end(), other.positions.begin(), other.positions.end());
}

Dataset make_dataset(const RoadProfile& road, const GammaSeries& series, double v_ref) {
  if (series.size() != road.steps()) throw std::invalid_argument("gamma series length does not match the road");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series.positions[i] != i) throw std::invalid_argument("gamma series is not aligned with road steps");
    if (series.flags[i] == kGammaOk) keep.push_back(i);
  }
  Dataset d;
  d.features.resize(static_cast<Index>(keep.size()), static_cast<Index>(kNetInputs));
  d.target.resize(static_cast<Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto pv = preview(road, keep[r], kNetPreviewLength);
    const auto row = static_cast<Index>(r);
    for (std::size_t j = 0; j < kNetPreviewLength; ++j) d.features(row, static_cast<Index>(j)) = pv.samples[j];
    d.features(row, static_cast<Index>(kNetPreviewLength)) = v_ref;
    d.target[row] = series.gamma[keep[r]];
    d.positions.push_back(keep[r]);
  }
  return d;
}

std::vector<std::size_t> constant_features(const Dataset& d) {
  std::vector<std::size_t> out;
  if (d.size() == 0) return out;
  for (Index c = 0; c < d.features.cols(); ++c)
    if (d.features.col(c).maxCoeff() == d.features.col(c).minCoeff()) out.push_back(static_cast<std::size_t>(c));
  return out;
}

std::uint64_t provenance_hash(const Dataset& d) {
  std::uint64_t h = fnv1a(std::string_view(reinterpret_cast<const char*>(d.features.data()),
                                           sizeof(double) * static_cast<std::size_t>(d.features.size())));
  return fnv1a(std::string_view(reinterpret_cast<const char*>(d.target.data()),
                                sizeof(double) * static_cast<std::size_t>(d.target.size())),
               h);
}

void write_dataset_csv(std::ostream& out, const Dataset& d, const Metadata& meta) {
  write_metadata(out, meta);
  const Index w = d.features.cols();
  for (Index j = 0; j + 1 < w; ++j) out << "g_" << (j + 1) << ',';
  out << "v_ref,gamma\n";
  for (Index r = 0; r < d.features.rows(); ++r) {
    for (Index j = 0; j < w; ++j) out << fmt9(d.features(r, j)) << ',';
    out << fmt9(d.target[r]) << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in) {
  const auto t = read_csv(in);
  const std::size_t gcol = t.column("gamma");
  const std::size_t vcol = t.column("v_ref");
  if (gcol != t.header.size() - 1 || vcol != t.header.size() - 2 || vcol != kNetPreviewLength)
    throw IngestError("dataset: expected g_1..g_" + std::to_string(kNetPreviewLength) + ",v_ref,gamma columns");
  for (std::size_t j = 0; j < vcol; ++j)
    if (t.header[j] != "g_" + std::to_string(j + 1)) throw IngestError("dataset: unexpected column " + t.header[j]);
  Dataset d;
  const auto w = static_cast<Index>(vcol + 1);
  d.features.resize(static_cast<Index>(t.rows.size()), w);
  d.target.resize(static_cast<Index>(t.rows.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (Index j = 0; j < w; ++j)
      d.features(static_cast<Index>(r), j) = parse_double(t.rows[r][static_cast<std::size_t>(j)], t.line_numbers[r]);
    d.target[static_cast<Index>(r)] = parse_double(t.rows[r][gcol], t.line_numbers[r]);
    d.positions.push_back(r);
  }
  return d;
}

std::string TrainConfig::describe() const {
  std::ostringstream s;
  s << std::setprecision(17) << "lr=" << learning_rate << ";epochs=" << epochs << ";batch=" << batch_size
    << ";l2=" << l2 << ";test=" << test_fraction << ";val=" << val_fraction << ";patience=" << patience
    << ";seed=" << seed << ";shuffle=" << shuffle;
  return s.str();
}

std::uint64_t TrainConfig::fingerprint() const { return fnv1a(describe()); }

MlpModel MlpModel::init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("network needs at least two layers");
  MlpModel m;
  m.dims = dims;
  Rng rng(seed);
  auto normal = [&rng] {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto in = static_cast<Index>(dims[l]), out = static_cast<Index>(dims[l + 1]);
    MatrixXd w(out, in);
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    for (Index c = 0; c < in; ++c)
      for (Index r = 0; r < out; ++r) w(r, c) = sd * normal();
    m.weights.push_back(std::move(w));
    m.biases.push_back(VectorXd::Zero(out));
  }
  m.input_scaler = {VectorXd::Zero(static_cast<Index>(dims.front())), VectorXd::Ones(static_cast<Index>(dims.front()))};
  m.target_scaler = {VectorXd::Zero(static_cast<Index>(dims.back())), VectorXd::Ones(static_cast<Index>(dims.back()))};
  return m;
}

MatrixXd MlpModel::forward_scaled(const MatrixXd& x) const {
  MatrixXd a = x;
  for (std::size_t l = 0; l < weights.size(); ++l)
    a = ((weights[l] * a).colwise() + biases[l]).cwiseMax(0.0);
  return a;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

double MlpModel::weight_norm_sq() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  return s;
}

namespace {

struct LayerGrads {
  std::vector<MatrixXd> w;
  std::vector<VectorXd> b;
};

/// Backprop over the columns of x; returns the data MSE (without penalty).
double backprop(const MlpModel& m, const MatrixXd& x, const VectorXd& y, double l2, LayerGrads& g) {
  const std::size_t layers = m.weights.size();
  std::vector<MatrixXd> act(layers + 1), pre(layers);
  act[0] = x;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = (m.weights[l] * act[l]).colwise() + m.biases[l];
    act[l + 1] = pre[l].cwiseMax(0.0);
  }
  const double nb = static_cast<double>(x.cols());
  const Eigen::RowVectorXd err = act[layers].row(0) - y.transpose();
  const double mse = err.squaredNorm() / nb;

  g.w.resize(layers);
  g.b.resize(layers);
  MatrixXd delta = (2.0 / nb) * err;
  for (std::size_t l = layers; l-- > 0;) {
    delta = delta.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    g.w[l] = delta * act[l].transpose() + 2.0 * l2 * m.weights[l];
    g.b[l] = delta.rowwise().sum();
    if (l > 0) delta = m.weights[l].transpose() * delta;
  }
  return mse;
}

double scaled_mse(const MlpModel& m, const MatrixXd& x, const VectorXd& y) {
  if (x.cols() == 0) return 0.0;
  return (m.forward_scaled(x).row(0).transpose() - y).squaredNorm() / static_cast<double>(x.cols());
}

/// Scaled features as columns and scaled targets.
std::pair<MatrixXd, VectorXd> scaled_data(const MlpModel& m, const Dataset& d) {
  MatrixXd x = (d.features.rowwise() - m.input_scaler.min.transpose()).transpose();
  x = x.array().colwise() / m.input_scaler.range.array();
  VectorXd y = (d.target.array() - m.target_scaler.min[0]) / m.target_scaler.range[0];
  return {std::move(x), std::move(y)};
}

}  // namespace

Eigen::VectorXd flatten_parameters(const MlpModel& m) {
  VectorXd theta(static_cast<Index>(m.parameter_count()));
  Index o = 0;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    theta.segment(o, m.weights[l].size()) = m.weights[l].reshaped();
    o += m.weights[l].size();
    theta.segment(o, m.biases[l].size()) = m.biases[l];
    o += m.biases[l].size();
  }
  return theta;
}

void assign_parameters(MlpModel& m, const VectorXd& theta) {
  if (theta.size() != static_cast<Index>(m.parameter_count()))
    throw std::invalid_argument("parameter vector has the wrong length");
  Index o = 0;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    m.weights[l].reshaped() = theta.segment(o, m.weights[l].size());
    o += m.weights[l].size();
    m.biases[l] = theta.segment(o, m.biases[l].size());
    o += m.biases[l].size();
  }
}

LossGradient loss_and_gradient(const MlpModel& m, const MatrixXd& x, const VectorXd& y, double l2) {
  if (x.rows() != static_cast<Index>(m.dims.front()) || x.cols() != y.size())
    throw std::invalid_argument("loss_and_gradient: dimension mismatch");
  LayerGrads g;
  LossGradient out;
  out.loss = backprop(m, x, y, l2, g) + l2 * m.weight_norm_sq();
  out.grad.resize(static_cast<Index>(m.parameter_count()));
  Index o = 0;
  for (std::size_t l = 0; l < g.w.size(); ++l) {
    out.grad.segment(o, g.w[l].size()) = g.w[l].reshaped();
    o += g.w[l].size();
    out.grad.segment(o, g.b[l].size()) = g.b[l];
    o += g.b[l].size();
  }
  return out;
}

double gradient_check(const MlpModel& m, const MatrixXd& x, const VectorXd& y, double l2, double step,
                      std::size_t max_params) {
  const auto analytic = loss_and_gradient(m, x, y, l2).grad;
  const VectorXd theta = flatten_parameters(m);
  MlpModel probe = m;
  std::vector<Index> probe_idx(static_cast<std::size_t>(theta.size()));
  for (Index i = 0; i < theta.size(); ++i) probe_idx[static_cast<std::size_t>(i)] = i;
  if (max_params > 0 && max_params < probe_idx.size()) {
    Rng rng(0x9e3779b97f4a7c15ULL);
    rng.shuffle(probe_idx);
    probe_idx.resize(max_params);
  }
  VectorXd t = theta;
  double worst = 0.0;
  for (const Index i : probe_idx) {
    t[i] = theta[i] + step;
    assign_parameters(probe, t);
    const double up = loss_and_gradient(probe, x, y, l2).loss;
    t[i] = theta[i] - step;
    assign_parameters(probe, t);
    const double dn = loss_and_gradient(probe, x, y, l2).loss;
    t[i] = theta[i];
    worst = std::max(worst, std::abs(analytic[i] - (up - dn) / (2.0 * step)));
  }
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), 1e-12);
  return worst / scale;
}

TrainResult train_on(const Dataset& train_set, const Dataset& val, const TrainConfig& cfg,
                     std::vector<std::size_t> dims) {
  if (train_set.size() == 0) throw std::invalid_argument("empty training set");
  if (static_cast<std::size_t>(train_set.features.cols()) != dims.front())
    throw std::invalid_argument("feature width does not match the network input");
  if (!(cfg.learning_rate > 0.0) || cfg.batch_size == 0) throw std::invalid_argument("bad training configuration");

  TrainResult res;
  MlpModel& m = res.model;
  m = MlpModel::init(dims, cfg.seed);
  m.input_scaler = MinMaxScaler::fit(train_set.features);
  m.target_scaler = MinMaxScaler::fit(train_set.target);
  m.config_fingerprint = cfg.fingerprint();
  m.scaler_provenance = provenance_hash(train_set);

  const auto [x, y] = scaled_data(m, train_set);
  const auto [xv, yv] = scaled_data(m, val);
  m.biases.back().setConstant(y.mean());

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Index> order(static_cast<std::size_t>(x.cols()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);

  const bool early = cfg.patience > 0 && val.size() > 0;
  MlpModel best = m;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  LayerGrads g;
  MatrixXd xb;
  VectorXd yb;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      xb.resize(x.rows(), static_cast<Index>(len));
      yb.resize(static_cast<Index>(len));
      for (std::size_t i = 0; i < len; ++i) {
        xb.col(static_cast<Index>(i)) = x.col(order[start + i]);
        yb[static_cast<Index>(i)] = y[order[start + i]];
      }
      backprop(m, xb, yb, cfg.l2, g);
      for (std::size_t l = 0; l < m.weights.size(); ++l) {
        m.weights[l] -= cfg.learning_rate * g.w[l];
        m.biases[l] -= cfg.learning_rate * g.b[l];
      }
    }
    const double tl = scaled_mse(m, x, y);
    const double vl = val.size() > 0 ? scaled_mse(m, xv, yv) : tl;
    if (!std::isfinite(tl) || !std::isfinite(vl)) throw TrainingError("training diverged", epoch);
    res.history.train_loss.push_back(tl);
    res.history.val_loss.push_back(vl);
    if (early) {
      if (vl < best_val) {
        best_val = vl;
        best = m;
        res.history.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    } else {
      res.history.best_epoch = epoch;
    }
  }
  if (early) m = best;
  return res;
}

TrainResult train(const Dataset& d, const TrainConfig& cfg) {
  if (d.size() < 100) throw std::invalid_argument("training needs at least 100 samples");
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0 && cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0))
    throw std::invalid_argument("split fractions must lie in [0, 1)");
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(cfg.seed);
  rng.shuffle(idx);
  const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(d.size())));
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> rest(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(rest.size())));
  std::vector<std::size_t> val(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());

  auto res = train_on(d.subset(tr), d.subset(val), cfg, {static_cast<std::size_t>(d.features.cols()), 250, 80, 16, 1});
  res.train_idx = std::move(tr);
  res.val_idx = std::move(val);
  res.test_idx = std::move(test);
  return res;
}

double predict(const MlpModel& m, std::span<const double> preview, double v_ref) {
  if (preview.size() + 1 != m.dims.front())
    throw std::invalid_argument("preview length " + std::to_string(preview.size()) + " does not match the network");
  VectorXd x(static_cast<Index>(m.dims.front()));
  for (std::size_t i = 0; i < preview.size(); ++i) x[static_cast<Index>(i)] = preview[i];
  x[x.size() - 1] = v_ref;
  const VectorXd out = m.forward_scaled(m.input_scaler.scale(x));
  return std::max(0.0, m.target_scaler.unscale(out)[0]);
}

VectorXd predict_batch(const MlpModel& m, const MatrixXd& features) {
  if (features.cols() != static_cast<Index>(m.dims.front())) throw std::invalid_argument("feature width mismatch");
  MatrixXd x = (features.rowwise() - m.input_scaler.min.transpose()).transpose();
  x = x.array().colwise() / m.input_scaler.range.array();
  const VectorXd z = m.forward_scaled(x).row(0).transpose();
  return (z.array() * m.target_scaler.range[0] + m.target_scaler.min[0]).cwiseMax(0.0);
}

EvalMetrics evaluate(const MlpModel& m, const Dataset& test) {
  EvalMetrics e;
  if (test.size() == 0) return e;
  const VectorXd pred = predict_batch(m, test.features);
  const VectorXd err = pred - test.target;
  const double n = static_cast<double>(test.size());
  e.mse = err.squaredNorm() / n;
  e.mae = err.cwiseAbs().sum() / n;
  const double r = m.target_scaler.range[0];
  e.mse_scaled = e.mse / (r * r);
  e.mae_scaled = e.mae / r;
  return e;
}

namespace {

void write_vec(std::ostream& out, const char* tag, const VectorXd& v) {
  out << tag;
  for (Index i = 0; i < v.size(); ++i) out << ' ' << v[i];
  out << '\n';
}

VectorXd read_vec(std::istream& in, const char* tag, Index n) {
  std::string t;
  in >> t;
  if (t != tag) throw IngestError(std::string("model file: expected '") + tag + "', found '" + t + "'");
  VectorXd v(n);
  for (Index i = 0; i < n; ++i)
    if (!(in >> v[i])) throw IngestError(std::string("model file: truncated ") + tag);
  return v;
}

}  // namespace

void save_model(std::ostream& out, const MlpModel& m) {
  const auto old = out.precision(17);
  out << "ecocruise-mlp 1\n";
  out << "dims " << m.dims.size();
  for (auto d : m.dims) out << ' ' << d;
  out << "\nactivation relu\n";
  out << "config " << hex64(m.config_fingerprint) << "\nprovenance " << hex64(m.scaler_provenance) << '\n';
  write_vec(out, "input_min", m.input_scaler.min);
  write_vec(out, "input_range", m.input_scaler.range);
  write_vec(out, "target_min", m.target_scaler.min);
  write_vec(out, "target_range", m.target_scaler.range);
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    out << "layer " << l << ' ' << m.weights[l].rows() << ' ' << m.weights[l].cols() << '\n';
    for (Index r = 0; r < m.weights[l].rows(); ++r) {
      for (Index c = 0; c < m.weights[l].cols(); ++c) out << (c ? " " : "") << m.weights[l](r, c);
      out << '\n';
    }
    write_vec(out, "bias", m.biases[l]);
  }
  out.precision(old);
}

MlpModel load_model(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "ecocruise-mlp" || version != 1)
    throw IngestError("not an ecocruise-mlp version 1 file");
  MlpModel m;
  std::size_t nd = 0;
  if (!(in >> tag >> nd) || tag != "dims" || nd < 2 || nd > 64) throw IngestError("model file: bad dims");
  m.dims.assign(nd, 0);
  for (auto& d : m.dims)
    if (!(in >> d) || d == 0) throw IngestError("model file: bad layer width");
  if (!(in >> tag) || tag != "activation" || !(in >> tag) || tag != "relu")
    throw IngestError("model file: unsupported activation");
  std::string hex;
  if (!(in >> tag >> hex) || tag != "config") throw IngestError("model file: missing config");
  m.config_fingerprint = std::stoull(hex, nullptr, 16);
  if (!(in >> tag >> hex) || tag != "provenance") throw IngestError("model file: missing provenance");
  m.scaler_provenance = std::stoull(hex, nullptr, 16);
  const auto ni = static_cast<Index>(m.dims.front()), no = static_cast<Index>(m.dims.back());
  m.input_scaler.min = read_vec(in, "input_min", ni);
  m.input_scaler.range = read_vec(in, "input_range", ni);
  m.target_scaler.min = read_vec(in, "target_min", no);
  m.target_scaler.range = read_vec(in, "target_range", no);
  for (std::size_t l = 0; l + 1 < nd; ++l) {
    std::size_t idx = 0;
    Index rows = 0, cols = 0;
    if (!(in >> tag >> idx >> rows >> cols) || tag != "layer" || idx != l ||
        rows != static_cast<Index>(m.dims[l + 1]) || cols != static_cast<Index>(m.dims[l]))
      throw IngestError("model file: bad layer header " + std::to_string(l));
    MatrixXd w(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c)
        if (!(in >> w(r, c))) throw IngestError("model file: truncated weights");
    m.weights.push_back(std::move(w));
    m.biases.push_back(read_vec(in, "bias", rows));
  }
  return m;
}

void save_model_file(const std::filesystem::path& path, const MlpModel& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_model(out, m);
}

MlpModel load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return load_model(in);
}

}  // namespace ecocruise
