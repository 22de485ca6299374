#pragma once

// Desk-scale target classifier: a dense network over flattened pixels scaled
// to [0, 1], trained with softmax cross-entropy.

#include <functional>
#include <numeric>
#include <vector>

#include "la3/augment.hpp"
#include "la3/dataset.hpp"
#include "la3/nn.hpp"

namespace la3 {

struct ClassifierConfig {
  std::vector<int> hidden = {64};
  int epochs = 30;
  int batch_size = 32;
  double lr = 0.003;
};

struct DeskClassifier {
  nn::DenseNet net;
  int num_classes = 0;
  int height = 0;
  int width = 0;
  int channels = 0;

  Eigen::Index input_dim() const { return static_cast<Eigen::Index>(height) * width * channels; }
};

inline void pixels_to_row(const ImageRaster& img, Eigen::Ref<nn::RealMatrix> row) {
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    row(0, static_cast<Eigen::Index>(i)) = static_cast<double>(img.pixels[i]) / 255.0;
}

/// Lowest index wins ties.
inline int argmax_row(const Eigen::Ref<const nn::RealMatrix>& row) {
  int best = 0;
  for (Eigen::Index j = 1; j < row.cols(); ++j)
    if (row(0, j) > row(0, best)) best = static_cast<int>(j);
  return best;
}

/// Predicts one image at a time so a sample's prediction never depends on
/// which other samples are evaluated alongside it.
inline int predict_class(const DeskClassifier& clf, const ImageRaster& img) {
  if (img.height != clf.height || img.width != clf.width || img.channels != clf.channels)
    throw shape_error("classifier: image shape does not match classifier input");
  nn::RealMatrix x(1, clf.input_dim());
  pixels_to_row(img, x.row(0));
  return argmax_row(nn::forward_batch(clf.net, x));
}

inline double accuracy(const DeskClassifier& clf, const std::vector<ImageRaster>& images,
                       const std::vector<int>& labels) {
  if (images.empty()) throw input_error("accuracy: empty image list");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) correct += predict_class(clf, images[i]) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

/// Called per (sample, epoch) during training; returns the image to train on.
using AugmentHook = std::function<ImageRaster(const ImageRaster&, int label, std::size_t index, int epoch)>;

struct ClassifierFit {
  DeskClassifier classifier;
  double train_accuracy = 0.0;
};

/// Trains a fresh classifier. Shuffling and initialization derive from `seed`
/// only; the augmentation hook must carry its own randomness so that an
/// identity hook reproduces the unaugmented run exactly.
inline ClassifierFit train_classifier(const LabeledDataset& train, const ClassifierConfig& cfg, std::uint64_t seed,
                                      const AugmentHook& augment = {}) {
  if (train.empty()) throw input_error("train_classifier: empty training set");
  validate(train, false);
  if (train.num_classes < 2) throw config_error("train_classifier: need at least two classes");
  {
    auto counts = train.class_counts();
    std::size_t present = 0;
    for (auto c : counts) present += c > 0;
    if (present < 2) throw config_error("train_classifier: training data covers a single class");
  }
  if (cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.lr <= 0) throw config_error("train_classifier: bad config");
  for (int h : cfg.hidden)
    if (h <= 0) throw config_error("train_classifier: hidden sizes must be positive");

  const auto& first = train.images.front();
  for (const auto& img : train.images)
    if (!img.same_shape(first)) throw input_error("train_classifier: mixed image shapes");

  DeskClassifier clf;
  clf.num_classes = train.num_classes;
  clf.height = first.height;
  clf.width = first.width;
  clf.channels = first.channels;
  std::vector<Eigen::Index> dims{clf.input_dim()};
  for (int h : cfg.hidden) dims.push_back(h);
  dims.push_back(train.num_classes);
  clf.net = nn::init_dense_net(dims, nn::Activation::identity, derive_seed(seed, 0));

  Rng order_rng(derive_seed(seed, 1));
  nn::AdamState adam;
  adam.config.lr = cfg.lr;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::ForwardCache cache;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, order_rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<Eigen::Index>(end - start);
      nn::RealMatrix xb(b, clf.input_dim());
      for (Eigen::Index r = 0; r < b; ++r) {
        const std::size_t idx = order[start + static_cast<std::size_t>(r)];
        if (augment) {
          pixels_to_row(augment(train.images[idx], train.labels[idx], idx, epoch), xb.row(r));
        } else {
          pixels_to_row(train.images[idx], xb.row(r));
        }
      }
      nn::RealMatrix logits = nn::forward_batch(clf.net, xb, &cache);
      // softmax cross-entropy, mean over the batch
      nn::RealMatrix grad(b, train.num_classes);
      for (Eigen::Index r = 0; r < b; ++r) {
        auto row = logits.row(r);
        const double mx = row.maxCoeff();
        Eigen::RowVectorXd p = (row.array() - mx).exp();
        p /= p.sum();
        p(train.labels[order[start + static_cast<std::size_t>(r)]]) -= 1.0;
        grad.row(r) = p / static_cast<double>(b);
      }
      nn::adam_step(clf.net, nn::backward(clf.net, cache, grad), adam);
    }
  }
  ClassifierFit fit{std::move(clf), 0.0};
  fit.train_accuracy = accuracy(fit.classifier, train.images, train.labels);
  return fit;
}

/// Pre-trains the frozen target model used for density matching.
inline ClassifierFit pretrain_classifier(const LabeledDataset& train, const ClassifierConfig& cfg,
                                         std::uint64_t seed) {
  return train_classifier(train, cfg, seed);
}

}  // namespace la3
