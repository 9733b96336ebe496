#include "eskin/vd2t_layers.hpp"

#include <cmath>

#include "eskin/error.hpp"

namespace eskin::nn {

namespace {

// 53 random bits mapped to [0, 1); identical across standard libraries.
double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

void init_uniform(Mat& w, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = bound * (2.0 * uniform01(rng) - 1.0);
}

void check_finite(const Mat& m, const std::string& layer) {
  if (!m.allFinite()) throw NumericalError("non-finite activations in layer " + layer);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in, int out)
    : name_(std::move(name)), w_(Mat::Zero(out, in)), b_(Mat::Zero(out, 1)), gw_(Mat::Zero(out, in)),
      gb_(Mat::Zero(out, 1)) {
  if (in < 1 || out < 1) throw InvalidArgument("layer " + name_ + " needs positive widths");
}

Mat Linear::forward(const Mat& x, bool) {
  x_ = x;
  Mat y = w_ * x;
  y.colwise() += b_.col(0);
  return y;
}

Mat Linear::backward(const Mat& dy) {
  gw_.noalias() = dy * x_.transpose();
  gb_ = dy.rowwise().sum();
  return w_.transpose() * dy;
}

std::vector<Param> Linear::params() { return {{name_ + ".weight", &w_, &gw_}, {name_ + ".bias", &b_, &gb_}}; }

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::string name, int features, double eps, double momentum)
    : name_(std::move(name)), eps_(eps), momentum_(momentum), gamma_(Mat::Ones(features, 1)),
      beta_(Mat::Zero(features, 1)), g_gamma_(Mat::Zero(features, 1)), g_beta_(Mat::Zero(features, 1)),
      run_mean_(Mat::Zero(features, 1)), run_var_(Mat::Ones(features, 1)) {}

Mat BatchNorm::forward(const Mat& x, bool training) {
  const auto n = x.cols();
  trained_batch_ = training;
  if (training) {
    if (n < 2) throw InvalidArgument("batch normalisation in " + name_ + " needs a batch of at least 2");
    const Eigen::VectorXd mean = x.rowwise().mean();
    Mat xc = x.colwise() - mean;
    const Eigen::VectorXd var = xc.array().square().rowwise().mean();
    inv_std_ = (var.array() + eps_).rsqrt();
    xhat_ = inv_std_.asDiagonal() * xc;
    run_mean_.col(0) = (1.0 - momentum_) * run_mean_.col(0) + momentum_ * mean;
    run_var_.col(0) = (1.0 - momentum_) * run_var_.col(0) + momentum_ * var * (double(n) / double(n - 1));
  } else {
    inv_std_ = (run_var_.col(0).array() + eps_).rsqrt();
    xhat_ = inv_std_.asDiagonal() * (x.colwise() - run_mean_.col(0));
  }
  Mat y = gamma_.col(0).asDiagonal() * xhat_;
  y.colwise() += beta_.col(0);
  return y;
}

Mat BatchNorm::backward(const Mat& dy) {
  g_beta_ = dy.rowwise().sum();
  g_gamma_ = dy.cwiseProduct(xhat_).rowwise().sum();
  const Mat dxhat = gamma_.col(0).asDiagonal() * dy;
  if (!trained_batch_) return inv_std_.asDiagonal() * dxhat;
  const double n = static_cast<double>(dy.cols());
  const Eigen::VectorXd s1 = dxhat.rowwise().sum();
  const Eigen::VectorXd s2 = dxhat.cwiseProduct(xhat_).rowwise().sum();
  Mat dx = n * dxhat;
  dx.colwise() -= s1;
  dx -= s2.asDiagonal() * xhat_;
  return (inv_std_ / n).asDiagonal() * dx;
}

std::vector<Param> BatchNorm::params() {
  return {{name_ + ".gamma", &gamma_, &g_gamma_}, {name_ + ".beta", &beta_, &g_beta_}};
}

std::vector<Param> BatchNorm::buffers() {
  return {{name_ + ".running_mean", &run_mean_, nullptr}, {name_ + ".running_var", &run_var_, nullptr}};
}

// ------------------------------------------------------ Relu and Dropout

Mat Relu::forward(const Mat& x, bool) {
  mask_ = (x.array() > 0.0).cast<double>();
  return x.cwiseProduct(mask_);
}

Mat Relu::backward(const Mat& dy) { return dy.cwiseProduct(mask_); }

Mat Dropout::forward(const Mat& x, bool training) {
  if (!training || p_ == 0.0) {
    mask_.resize(0, 0);
    return x;
  }
  mask_.resize(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p_);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) mask_(i, j) = uniform01(*rng_) < p_ ? 0.0 : keep;
  return x.cwiseProduct(mask_);
}

Mat Dropout::backward(const Mat& dy) { return mask_.size() == 0 ? dy : dy.cwiseProduct(mask_); }

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::string name, int cin, int cout, int length, int kernel, int pad)
    : name_(std::move(name)), cin_(cin), cout_(cout), len_(length), k_(kernel), pad_(pad),
      out_len_(length + 2 * pad - kernel + 1) {
  if (cin < 1 || cout < 1 || kernel < 1 || pad < 0 || out_len_ < 1)
    throw InvalidArgument("layer " + name_ + ": invalid 1-D convolution shape");
  w_ = Mat::Zero(cout, cin * kernel);
  gw_ = w_;
  b_ = Mat::Zero(cout, 1);
  gb_ = b_;
}

Mat Conv1d::forward(const Mat& x, bool) {
  const Eigen::Index n = x.cols();
  cols_.setZero(out_len_ * n, cin_ * k_);
  for (int ci = 0; ci < cin_; ++ci)
    for (int kk = 0; kk < k_; ++kk) {
      const int col = ci * k_ + kk;
      for (Eigen::Index b = 0; b < n; ++b)
        for (int l = 0; l < out_len_; ++l) {
          const int src = l + kk - pad_;
          if (src >= 0 && src < len_) cols_(b * out_len_ + l, col) = x(ci * len_ + src, b);
        }
    }
  const Mat out = cols_ * w_.transpose();
  Mat y(cout_ * out_len_, n);
  for (Eigen::Index b = 0; b < n; ++b)
    for (int co = 0; co < cout_; ++co)
      for (int l = 0; l < out_len_; ++l) y(co * out_len_ + l, b) = out(b * out_len_ + l, co) + b_(co, 0);
  return y;
}

Mat Conv1d::backward(const Mat& dy) {
  const Eigen::Index n = dy.cols();
  Mat dout(out_len_ * n, cout_);
  for (int co = 0; co < cout_; ++co)
    for (Eigen::Index b = 0; b < n; ++b)
      for (int l = 0; l < out_len_; ++l) dout(b * out_len_ + l, co) = dy(co * out_len_ + l, b);
  gw_.noalias() = dout.transpose() * cols_;
  gb_ = dout.colwise().sum().transpose();
  const Mat dcols = dout * w_;
  Mat dx = Mat::Zero(cin_ * len_, n);
  for (int ci = 0; ci < cin_; ++ci)
    for (int kk = 0; kk < k_; ++kk) {
      const int col = ci * k_ + kk;
      for (Eigen::Index b = 0; b < n; ++b)
        for (int l = 0; l < out_len_; ++l) {
          const int src = l + kk - pad_;
          if (src >= 0 && src < len_) dx(ci * len_ + src, b) += dcols(b * out_len_ + l, col);
        }
    }
  return dx;
}

std::vector<Param> Conv1d::params() { return {{name_ + ".weight", &w_, &gw_}, {name_ + ".bias", &b_, &gb_}}; }

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int cin, int cout, int height, int width, int kernel, int stride, int pad)
    : name_(std::move(name)), cin_(cin), cout_(cout), h_(height), w_in_(width), k_(kernel), stride_(stride),
      pad_(pad) {
  if (cin < 1 || cout < 1 || kernel < 1 || stride < 1 || pad < 0 || height + 2 * pad < kernel ||
      width + 2 * pad < kernel)
    throw InvalidArgument("layer " + name_ + ": invalid 2-D convolution shape");
  ho_ = (h_ + 2 * pad_ - k_) / stride_ + 1;
  wo_ = (w_in_ + 2 * pad_ - k_) / stride_ + 1;
  w_ = Mat::Zero(cout, cin * kernel * kernel);
  gw_ = w_;
  b_ = Mat::Zero(cout, 1);
  gb_ = b_;
}

Mat Conv2d::forward(const Mat& x, bool) {
  const Eigen::Index n = x.cols();
  const int plane = ho_ * wo_;
  cols_.setZero(plane * n, cin_ * k_ * k_);
  for (int ci = 0; ci < cin_; ++ci)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        const int col = (ci * k_ + ky) * k_ + kx;
        for (Eigen::Index b = 0; b < n; ++b)
          for (int oy = 0; oy < ho_; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= h_) continue;
            for (int ox = 0; ox < wo_; ++ox) {
              const int ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < w_in_) cols_(b * plane + oy * wo_ + ox, col) = x((ci * h_ + iy) * w_in_ + ix, b);
            }
          }
      }
  const Mat out = cols_ * w_.transpose();
  Mat y(cout_ * plane, n);
  for (Eigen::Index b = 0; b < n; ++b)
    for (int co = 0; co < cout_; ++co)
      for (int p = 0; p < plane; ++p) y(co * plane + p, b) = out(b * plane + p, co) + b_(co, 0);
  return y;
}

Mat Conv2d::backward(const Mat& dy) {
  const Eigen::Index n = dy.cols();
  const int plane = ho_ * wo_;
  Mat dout(plane * n, cout_);
  for (int co = 0; co < cout_; ++co)
    for (Eigen::Index b = 0; b < n; ++b)
      for (int p = 0; p < plane; ++p) dout(b * plane + p, co) = dy(co * plane + p, b);
  gw_.noalias() = dout.transpose() * cols_;
  gb_ = dout.colwise().sum().transpose();
  const Mat dcols = dout * w_;
  Mat dx = Mat::Zero(cin_ * h_ * w_in_, n);
  for (int ci = 0; ci < cin_; ++ci)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        const int col = (ci * k_ + ky) * k_ + kx;
        for (Eigen::Index b = 0; b < n; ++b)
          for (int oy = 0; oy < ho_; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= h_) continue;
            for (int ox = 0; ox < wo_; ++ox) {
              const int ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < w_in_) dx((ci * h_ + iy) * w_in_ + ix, b) += dcols(b * plane + oy * wo_ + ox, col);
            }
          }
      }
  return dx;
}

std::vector<Param> Conv2d::params() { return {{name_ + ".weight", &w_, &gw_}, {name_ + ".bias", &b_, &gb_}}; }

// --------------------------------------------------------------- Pooling

Mat GlobalAvgPool1d::forward(const Mat& x, bool) {
  Mat y(channels_, x.cols());
  for (Eigen::Index b = 0; b < x.cols(); ++b)
    for (int c = 0; c < channels_; ++c) y(c, b) = x.col(b).segment(c * length_, length_).mean();
  return y;
}

Mat GlobalAvgPool1d::backward(const Mat& dy) {
  Mat dx(channels_ * length_, dy.cols());
  for (Eigen::Index b = 0; b < dy.cols(); ++b)
    for (int c = 0; c < channels_; ++c) dx.col(b).segment(c * length_, length_).setConstant(dy(c, b) / length_);
  return dx;
}

// ------------------------------------------------------------ Sequential

void Sequential::add(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() && layers_.back()->out_size() != layer->in_size())
    throw InvalidArgument("layer " + layer->name() + " expects " + std::to_string(layer->in_size()) +
                          " inputs but " + layers_.back()->name() + " produces " +
                          std::to_string(layers_.back()->out_size()));
  layers_.push_back(std::move(layer));
}

Mat Sequential::forward(const Mat& x, bool training) {
  Mat h = x;
  for (auto& l : layers_) {
    h = l->forward(h, training);
    check_finite(h, l->name());
  }
  return h;
}

Mat Sequential::backward(const Mat& dy) {
  Mat g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param> Sequential::params() {
  std::vector<Param> out;
  for (auto& l : layers_)
    for (auto& p : l->params()) out.push_back(p);
  return out;
}

std::vector<Param> Sequential::buffers() {
  std::vector<Param> out;
  for (auto& l : layers_)
    for (auto& p : l->buffers()) out.push_back(p);
  return out;
}

int Sequential::in_size() const { return layers_.empty() ? 0 : layers_.front()->in_size(); }
int Sequential::out_size() const { return layers_.empty() ? 0 : layers_.back()->out_size(); }

// ------------------------------------------------------------------ Adam

void Adam::step(const std::vector<Param>& params, double lr, long t) {
  if (t < 1) throw InvalidArgument("Adam step index must be >= 1");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (m_.size() != params.size()) throw InvalidArgument("Adam state does not match the parameter list");
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat& g = *params[i].grad;
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseAbs2();
    params[i].value->array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

}  // namespace eskin::nn
