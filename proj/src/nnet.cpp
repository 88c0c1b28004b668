#include "clcs/nnet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "clcs/error.hpp"
#include "clcs/kernels.hpp"
#include "clcs/rng.hpp"

namespace clcs::nnet {

// --- Matrix / Normalizer --------------------------------------------------------

void Matrix::append_row(std::span<const double> r) {
  if (rows == 0 && cols == 0) cols = r.size();
  if (r.size() != cols) {
    throw Error(Errc::dimension_mismatch, "row width " + std::to_string(r.size()) +
                                              " != " + std::to_string(cols));
  }
  data.insert(data.end(), r.begin(), r.end());
  ++rows;
}

Matrix Matrix::slice_rows(std::size_t begin, std::size_t end) const {
  end = std::min(end, rows);
  begin = std::min(begin, end);
  Matrix m(end - begin, cols);
  std::copy(data.begin() + static_cast<std::ptrdiff_t>(begin * cols),
            data.begin() + static_cast<std::ptrdiff_t>(end * cols), m.data.begin());
  return m;
}

Normalizer Normalizer::fit(const Matrix& m) {
  Normalizer n;
  n.mean.assign(m.cols, 0.0);
  n.std.assign(m.cols, 0.0);
  if (m.rows == 0) {
    std::fill(n.std.begin(), n.std.end(), 1.0);
    return n;
  }
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) n.mean[j] += m.at(i, j);
  }
  for (auto& v : n.mean) v /= static_cast<double>(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      const double d = m.at(i, j) - n.mean[j];
      n.std[j] += d * d;
    }
  }
  for (auto& v : n.std) {
    v = std::max(std::sqrt(v / static_cast<double>(m.rows)), kStdFloor);
  }
  return n;
}

Normalizer Normalizer::identity(std::size_t n) {
  Normalizer z;
  z.mean.assign(n, 0.0);
  z.std.assign(n, 1.0);
  return z;
}

void Normalizer::normalize(std::span<const double> x, std::span<double> out) const {
  if (x.size() != mean.size() || out.size() != mean.size()) {
    throw Error(Errc::dimension_mismatch, "normalizer width mismatch");
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / std[i];
}

void Normalizer::denormalize(std::span<const double> z, std::span<double> out) const {
  if (z.size() != mean.size() || out.size() != mean.size()) {
    throw Error(Errc::dimension_mismatch, "normalizer width mismatch");
  }
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] * std[i] + mean[i];
}

Matrix Normalizer::normalize(const Matrix& m) const {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) normalize(m.row(i), out.row(i));
  return out;
}

void SupervisedDataset::fit_normalization() {
  if (inputs.rows != targets.rows) {
    throw Error(Errc::dimension_mismatch, "inputs and targets row counts differ");
  }
  input_norm = Normalizer::fit(inputs);
  target_norm = Normalizer::fit(targets);
}

// --- Mlp ------------------------------------------------------------------------

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) {
    throw Error(Errc::invalid_argument, "an Mlp needs at least input and output sizes");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] == 0 || sizes_[l + 1] == 0) {
      throw Error(Errc::invalid_argument, "layer sizes must be positive");
    }
    offsets_.push_back(total);
    total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::random(std::vector<std::size_t> sizes, std::uint64_t seed) {
  Mlp net(std::move(sizes));
  Rng rng(seed);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const double n_in = static_cast<double>(net.sizes_[l]);
    const double n_out = static_cast<double>(net.sizes_[l + 1]);
    const double limit = std::sqrt(6.0 / (n_in + n_out));
    for (auto& w : net.weights(l)) w = rng.uniform(-limit, limit);
  }
  return net;
}

std::span<double> Mlp::weights(std::size_t l) {
  return {params_.data() + offsets_[l], sizes_[l] * sizes_[l + 1]};
}
std::span<const double> Mlp::weights(std::size_t l) const {
  return {params_.data() + offsets_[l], sizes_[l] * sizes_[l + 1]};
}
std::span<double> Mlp::biases(std::size_t l) {
  return {params_.data() + offsets_[l] + sizes_[l] * sizes_[l + 1], sizes_[l + 1]};
}
std::span<const double> Mlp::biases(std::size_t l) const {
  return {params_.data() + offsets_[l] + sizes_[l] * sizes_[l + 1], sizes_[l + 1]};
}

void Mlp::forward(std::span<const double> x, ForwardCache& cache) const {
  if (x.size() != input_size()) {
    throw Error(Errc::dimension_mismatch,
                "network input has " + std::to_string(x.size()) + " values, expected " +
                    std::to_string(input_size()));
  }
  const std::size_t L = layer_count();
  cache.activations.resize(L + 1);
  cache.activations[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < L; ++l) {
    auto& out = cache.activations[l + 1];
    out.resize(sizes_[l + 1]);
    kernels::gemv(weights(l), sizes_[l + 1], sizes_[l], cache.activations[l],
                  biases(l), out);
    if (l + 1 < L) {
      for (auto& v : out) v = std::tanh(v);
    }
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  ForwardCache cache;
  forward(x, cache);
  return std::move(cache.activations.back());
}

void Mlp::backward(const ForwardCache& cache, std::span<const double> output_grad,
                   std::span<double> param_grad, std::span<double> input_grad,
                   std::span<const double> extra_last_hidden) const {
  const std::size_t L = layer_count();
  if (output_grad.size() != output_size()) {
    throw Error(Errc::dimension_mismatch, "output gradient width mismatch");
  }
  if (!param_grad.empty() && param_grad.size() != params_.size()) {
    throw Error(Errc::dimension_mismatch, "parameter gradient size mismatch");
  }
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  std::vector<double> prev;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t n_in = sizes_[l];
    const std::size_t n_out = sizes_[l + 1];
    if (l + 1 < L) {
      const auto& a = cache.activations[l + 1];
      for (std::size_t i = 0; i < n_out; ++i) delta[i] *= 1.0 - a[i] * a[i];
    }
    if (!param_grad.empty()) {
      const std::size_t off = offsets_[l];
      kernels::rank1_acc(param_grad.subspan(off, n_in * n_out), n_out, n_in, delta,
                         cache.activations[l]);
      auto gb = param_grad.subspan(off + n_in * n_out, n_out);
      for (std::size_t i = 0; i < n_out; ++i) gb[i] += delta[i];
    }
    if (l == 0 && input_grad.empty()) break;
    prev.assign(n_in, 0.0);
    kernels::gemv_t_acc(weights(l), n_out, n_in, delta, prev);
    if (l + 1 == L && !extra_last_hidden.empty() && L >= 2) {
      if (extra_last_hidden.size() != n_in) {
        throw Error(Errc::dimension_mismatch, "extra hidden gradient width mismatch");
      }
      for (std::size_t i = 0; i < n_in; ++i) prev[i] += extra_last_hidden[i];
    }
    delta.swap(prev);
  }
  if (!input_grad.empty()) {
    if (input_grad.size() != input_size()) {
      throw Error(Errc::dimension_mismatch, "input gradient width mismatch");
    }
    for (std::size_t i = 0; i < input_grad.size(); ++i) input_grad[i] = delta[i];
  }
}

// --- loss -------------------------------------------------------------------------

LossAndGrad mse_grad(const Mlp& net, const Matrix& inputs, const Matrix& targets) {
  if (inputs.rows != targets.rows || targets.cols != net.output_size()) {
    throw Error(Errc::dimension_mismatch, "batch shape does not match the network");
  }
  LossAndGrad out;
  out.grad.assign(net.parameter_count(), 0.0);
  if (inputs.rows == 0) return out;
  const double scale = 1.0 / static_cast<double>(inputs.rows * targets.cols);
  ForwardCache cache;
  std::vector<double> d_out(targets.cols);
  for (std::size_t i = 0; i < inputs.rows; ++i) {
    net.forward(inputs.row(i), cache);
    const auto& y = cache.activations.back();
    const auto t = targets.row(i);
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double r = y[j] - t[j];
      out.loss += r * r * scale;
      d_out[j] = 2.0 * r * scale;
    }
    net.backward(cache, d_out, out.grad, {});
  }
  return out;
}

double mse(const Mlp& net, const Matrix& inputs, const Matrix& targets) {
  if (inputs.rows == 0) return 0.0;
  double s = 0.0;
  ForwardCache cache;
  for (std::size_t i = 0; i < inputs.rows; ++i) {
    net.forward(inputs.row(i), cache);
    const auto& y = cache.activations.back();
    const auto t = targets.row(i);
    for (std::size_t j = 0; j < t.size(); ++j) s += (y[j] - t[j]) * (y[j] - t[j]);
  }
  return s / static_cast<double>(inputs.rows * targets.cols);
}

// --- Adam ---------------------------------------------------------------------------

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(Errc::dimension_mismatch, "optimizer state size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

// --- training -------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw Error(Errc::invalid_argument, "learning rate must be > 0");
  }
  if (batch_size < 1) throw Error(Errc::invalid_argument, "batch size must be >= 1");
  if (!(final_learning_rate >= 0.0)) {
    throw Error(Errc::invalid_argument, "final learning rate must be >= 0");
  }
}

double TrainConfig::rate_at(std::size_t epoch) const {
  if (final_learning_rate == 0.0 || max_epochs <= 1) return learning_rate;
  const double f = static_cast<double>(std::min(epoch, max_epochs) - 1) /
                   static_cast<double>(max_epochs - 1);
  return learning_rate * std::pow(final_learning_rate / learning_rate, f);
}

TrainResult train(const Mlp& init, const SupervisedDataset& data,
                  const SupervisedDataset& val, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw Error(Errc::too_short, "empty training set");

  const Matrix x = data.input_norm.normalize(data.inputs);
  const Matrix t = data.target_norm.normalize(data.targets);
  const bool has_val = val.size() > 0;
  const Matrix vx = has_val ? data.input_norm.normalize(val.inputs) : Matrix{};
  const Matrix vt = has_val ? data.target_norm.normalize(val.targets) : Matrix{};

  TrainResult result{init, {}};
  Mlp net = init;
  Adam opt(net.parameter_count(), cfg.learning_rate, cfg.beta1, cfg.beta2);
  Rng rng(cfg.seed);

  double best = has_val ? mse(net, vx, vt) : mse(net, x, t);
  std::size_t since_best = 0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Matrix bx(0, x.cols), bt(0, t.cols);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    opt.set_learning_rate(cfg.rate_at(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      bx = Matrix(end - start, x.cols);
      bt = Matrix(end - start, t.cols);
      for (std::size_t i = start; i < end; ++i) {
        std::copy_n(x.row(order[i]).begin(), x.cols, bx.row(i - start).begin());
        std::copy_n(t.row(order[i]).begin(), t.cols, bt.row(i - start).begin());
      }
      auto lg = mse_grad(net, bx, bt);
      if (!std::isfinite(lg.loss)) {
        throw Error(Errc::training_diverged, "non-finite training loss", epoch);
      }
      opt.step(net.parameters(), lg.grad);
    }
    const double train_loss = mse(net, x, t);
    const double val_loss = has_val ? mse(net, vx, vt) : train_loss;
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw Error(Errc::training_diverged, "non-finite loss", epoch);
    }
    result.history.train_loss.push_back(train_loss);
    result.history.val_loss.push_back(val_loss);
    if (val_loss < best) {
      best = val_loss;
      result.net = net;
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

// --- serialisation ----------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error(Errc::io_error, "cannot format value");
  return std::string(buf, ptr);
}

void write_mlp(std::ostream& os, const Mlp& net) {
  os << "clcs-mlp 1\nlayers";
  for (auto s : net.sizes()) os << ' ' << s;
  os << '\n';
  const auto line = [&](std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << ' ';
      os << format_double(v[i]);
    }
    os << '\n';
  };
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    line(net.weights(l));
    line(net.biases(l));
  }
}

Mlp read_mlp(std::istream& is) {
  std::string magic, tag;
  int version = 0;
  if (!(is >> magic >> version) || magic != "clcs-mlp" || version != 1) {
    throw Error(Errc::parse_error, "not a clcs-mlp v1 weight file", 1);
  }
  std::string rest;
  std::getline(is, rest);
  std::string layers_line;
  std::getline(is, layers_line);
  std::istringstream ls(layers_line);
  ls >> tag;
  if (tag != "layers") throw Error(Errc::parse_error, "missing layers header", 2);
  std::vector<std::size_t> sizes;
  for (std::size_t s; ls >> s;) sizes.push_back(s);
  Mlp net(sizes);
  std::size_t line_no = 2;
  const auto read_line = [&](std::span<double> dst) {
    std::string line;
    ++line_no;
    if (!std::getline(is, line)) {
      throw Error(Errc::parse_error, "truncated weight file", line_no);
    }
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (auto& v : dst) {
      while (p < end && *p == ' ') ++p;
      auto [q, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) {
        throw Error(Errc::parse_error, "bad numeric value in weight file", line_no);
      }
      p = q;
    }
  };
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    read_line(net.weights(l));
    read_line(net.biases(l));
  }
  return net;
}

void save_mlp(const std::string& path, const Mlp& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io_error, "cannot open " + path + " for writing");
  write_mlp(os, net);
  if (!os) throw Error(Errc::io_error, "failed writing " + path);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io_error, "cannot open " + path);
  return read_mlp(is);
}

}  // namespace clcs::nnet
