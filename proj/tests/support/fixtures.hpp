#pragma once

// Small trained and hand-built classifiers shared by several test files.

#include "la3/classifier.hpp"
#include "la3/dataset.hpp"
#include "la3/evaluator.hpp"

namespace la3::support {

/// Two-class classifier on 2x2 gray images: class 1 iff mean pixel > 127.5.
inline DeskClassifier mean_threshold_classifier() {
  DeskClassifier clf;
  clf.num_classes = 2;
  clf.height = 2;
  clf.width = 2;
  clf.channels = 1;
  clf.net = nn::init_dense_net({4, 2}, nn::Activation::identity, 0);
  clf.net.layers[0].weights.setZero();
  clf.net.layers[0].weights.col(1).setConstant(0.25);
  clf.net.layers[0].bias(0, 0) = 0.0;
  clf.net.layers[0].bias(0, 1) = -0.5;
  return clf;
}

/// Classifier that always answers class 0 (all logits equal).
inline DeskClassifier constant_classifier(int num_classes, int h = 2, int w = 2) {
  DeskClassifier clf;
  clf.num_classes = num_classes;
  clf.height = h;
  clf.width = w;
  clf.channels = 1;
  clf.net = nn::init_dense_net({static_cast<Eigen::Index>(h * w), num_classes}, nn::Activation::identity, 0);
  clf.net.layers[0].weights.setZero();
  return clf;
}

inline ImageRaster gray2x2(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  ImageRaster img(2, 2, 1);
  img.pixels = {a, b, c, d};
  return img;
}

/// Dark vs bright textures: separable by mean intensity.
inline SyntheticSpec brightness_spec(int per_class, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.per_class = per_class;
  spec.plan = {PatternKind::dark_texture, PatternKind::bright_texture};
  spec.seed = seed;
  return spec;
}

inline ClassifierConfig small_classifier_config() {
  ClassifierConfig cfg;
  cfg.hidden = {32};
  cfg.epochs = 15;
  cfg.batch_size = 16;
  cfg.lr = 0.003;
  return cfg;
}

/// Four-class synthetic evaluator with a trained classifier.
inline EvalContext trained_context(std::uint64_t seed, int per_class = 60, int val_per_class = 20) {
  SyntheticSpec spec;
  spec.per_class = per_class;
  spec.seed = seed;
  const auto ds = make_synthetic(spec);
  auto [train, val] = split_train_val(ds, SplitSpec{SplitMode::per_class_count, static_cast<std::size_t>(val_per_class), seed});
  auto fit = pretrain_classifier(train, small_classifier_config(), seed);
  return EvalContext(std::move(fit.classifier), std::move(val));
}

}  // namespace la3::support
