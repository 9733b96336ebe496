#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace eskin::nn {

// Activations are (features x batch); sample b is column b. Channel-major
// layouts: a 1-D feature map of C channels and length L stores (c, l) at row
// c * L + l; a 2-D map stores (c, y, x) at row (c * H + y) * W + x.
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

struct Param {
  std::string name;
  Mat* value = nullptr;
  Mat* grad = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string name() const = 0;
  // Caches what backward needs.
  virtual Mat forward(const Mat& x, bool training) = 0;
  // Writes parameter gradients (overwriting) and returns d loss / d input.
  virtual Mat backward(const Mat& dy) = 0;
  virtual std::vector<Param> params() { return {}; }
  // Non-trainable state saved with the model (batch-norm running moments).
  virtual std::vector<Param> buffers() { return {}; }
  virtual int in_size() const = 0;
  virtual int out_size() const = 0;
};

// Fan-in scaled uniform weights, bound sqrt(6 / fan_in); zero biases.
void init_uniform(Mat& w, int fan_in, Rng& rng);

class Linear final : public Layer {
 public:
  Linear(std::string name, int in, int out);
  std::string name() const override { return name_; }
  Mat forward(const Mat& x, bool training) override;
  Mat backward(const Mat& dy) override;
  std::vector<Param> params() override;
  int in_size() const override { return static_cast<int>(w_.cols()); }
  int out_size() const override { return static_cast<int>(w_.rows()); }
  void init(Rng& rng) { init_uniform(w_, in_size(), rng); }

 private:
  std::string name_;
  Mat w_, b_, gw_, gb_, x_;
};

// Per-feature normalisation over the batch. Running moments use momentum
// 0.1 and the unbiased batch variance; evaluation mode uses them.
class BatchNorm final : public Layer {
 public:
  BatchNorm(std::string name, int features, double eps = 1e-5, double momentum = 0.1);
  std::string name() const override { return name_; }
  Mat forward(const Mat& x, bool training) override;
  Mat backward(const Mat& dy) override;
  std::vector<Param> params() override;
  std::vector<Param> buffers() override;
  int in_size() const override { return static_cast<int>(gamma_.rows()); }
  int out_size() const override { return in_size(); }

 private:
  std::string name_;
  double eps_, momentum_;
  Mat gamma_, beta_, g_gamma_, g_beta_, run_mean_, run_var_;
  Mat xhat_;
  Eigen::VectorXd inv_std_;
  bool trained_batch_ = false;
};

class Relu final : public Layer {
 public:
  Relu(std::string name, int size) : name_(std::move(name)), size_(size) {}
  std::string name() const override { return name_; }
  Mat forward(const Mat& x, bool training) override;
  Mat backward(const Mat& dy) override;
  int in_size() const override { return size_; }
  int out_size() const override { return size_; }

 private:
  std::string name_;
  int size_;
  Mat mask_;
};

// Inverted dropout: kept units are scaled by 1 / (1 - p) during training so
// evaluation (identity) matches the training expectation.
class Dropout final : public Layer {
 public:
  Dropout(std::string name, int size, double p, Rng* rng) : name_(std::move(name)), size_(size), p_(p), rng_(rng) {}
  std::string name() const override { return name_; }
  Mat forward(const Mat& x, bool training) override;
  Mat backward(const Mat& dy) override;
  int in_size() const override { return size_; }
  int out_size() const override { return size_; }

 private:
  std::string name_;
  int size_;
  double p_;
  Rng* rng_;
  Mat mask_;
};

// Stride-1 convolution over a (channels, length) map with zero padding.
class Conv1d final : public Layer {
 public:
  Conv1d(std::string name, int cin, int cout, int length, int kernel, int pad);
  std::string name() const override { return name_; }
  Mat forward(const Mat& x, bool training) override;
  Mat backward(const Mat& dy) override;
  std::vector<Param> params() override;
  int in_size() const override { return cin_ * len_; }
  int out_size() const override { return cout_ * out_len_; }
  int out_length() const { return out_len_; }
  void init(Rng& rng) { init_uniform(w_, cin_ * k_, rng); }

 private:
  std::string name_;
  int cin_, cout_, len_, k_, pad_, out_len_;
  Mat w_, b_, gw_, gb_, cols_;
};

// Convolution over a (channels, height, width) map, square kernel.
class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, int cin, int cout, int height, int width, int kernel, int stride, int pad);
  std::string name() const override { return name_; }
  Mat forward(const Mat& x, bool training) override;
  Mat backward(const Mat& dy) override;
  std::vector<Param> params() override;
  int in_size() const override { return cin_ * h_ * w_in_; }
  int out_size() const override { return cout_ * ho_ * wo_; }
  int out_height() const { return ho_; }
  int out_width() const { return wo_; }
  void init(Rng& rng) { init_uniform(w_, cin_ * k_ * k_, rng); }

 private:
  std::string name_;
  int cin_, cout_, h_, w_in_, k_, stride_, pad_, ho_, wo_;
  Mat w_, b_, gw_, gb_, cols_;
};

// Mean over the length of each channel.
class GlobalAvgPool1d final : public Layer {
 public:
  GlobalAvgPool1d(std::string name, int channels, int length)
      : name_(std::move(name)), channels_(channels), length_(length) {}
  std::string name() const override { return name_; }
  Mat forward(const Mat& x, bool training) override;
  Mat backward(const Mat& dy) override;
  int in_size() const override { return channels_ * length_; }
  int out_size() const override { return channels_; }

 private:
  std::string name_;
  int channels_, length_;
};

// Layers applied in order. Checks the shape chain on add.
class Sequential {
 public:
  void add(std::unique_ptr<Layer> layer);
  Mat forward(const Mat& x, bool training);
  Mat backward(const Mat& dy);
  std::vector<Param> params();
  std::vector<Param> buffers();
  int in_size() const;
  int out_size() const;
  bool empty() const { return layers_.empty(); }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Adam with bias-corrected moments.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}
  // t is the 1-based step index.
  void step(const std::vector<Param>& params, double lr, long t);
  void reset() { m_.clear(); v_.clear(); }

 private:
  double b1_, b2_, eps_;
  std::vector<Mat> m_, v_;
};

// Throws NumericalError naming the layer when m has non-finite entries.
void check_finite(const Mat& m, const std::string& layer);

}  // namespace eskin::nn
