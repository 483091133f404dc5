#include "stal/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace stal {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("config: " + what);
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) fail("unknown key \"" + it.key() + "\" in " + where);
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_double(const json& obj, const char* key, double fallback,
                  const std::string& where) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) fail(where + "." + key + " must be a number");
  return v->get<double>();
}

int get_int(const json& obj, const char* key, int fallback, const std::string& where) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer()) fail(where + "." + key + " must be an integer");
  return v->get<int>();
}

std::uint64_t get_seed(const json& obj, const char* key, std::uint64_t fallback,
                       const std::string& where) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (v->is_number_unsigned()) return v->get<std::uint64_t>();
  if (v->is_number_integer() && v->get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v->get<std::int64_t>());
  }
  fail(where + "." + key + " must be a non-negative integer");
}

bool get_bool(const json& obj, const char* key, bool fallback, const std::string& where) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) fail(where + "." + key + " must be a boolean");
  return v->get<bool>();
}

std::vector<double> get_number_list(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) fail(where + " must be a non-empty array of numbers");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number()) fail(where + " must contain only numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::array<int, 3> get_extent3(const json& obj, const char* key,
                               std::array<int, 3> fallback, const std::string& where) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_array() || v->size() != 3) {
    fail(where + "." + key + " must be an array of 3 integers");
  }
  std::array<int, 3> out{};
  for (int i = 0; i < 3; ++i) {
    const json& e = (*v)[static_cast<size_t>(i)];
    if (!e.is_number_integer()) fail(where + "." + key + " must contain integers");
    out[static_cast<size_t>(i)] = e.get<int>();
  }
  return out;
}

StageSpec parse_stage(const json& obj, const std::string& where) {
  check_keys(obj, where, {"channels", "kernel", "stride", "pool", "pool_stride"});
  if (find(obj, "channels") == nullptr) fail(where + " needs \"channels\"");
  StageSpec s;
  s.channels = get_int(obj, "channels", 0, where);
  s.kernel = get_extent3(obj, "kernel", {3, 3, 3}, where);
  s.stride = get_extent3(obj, "stride", {1, 1, 1}, where);
  s.pool = get_extent3(obj, "pool", {1, 1, 1}, where);
  s.pool_stride = get_extent3(obj, "pool_stride", {1, 1, 1}, where);
  return s;
}

std::vector<StageSpec> parse_stages(const json& obj, const char* key,
                                    std::vector<StageSpec> fallback,
                                    const std::string& where) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_array()) fail(where + "." + key + " must be an array of stages");
  std::vector<StageSpec> stages;
  for (size_t i = 0; i < v->size(); ++i) {
    stages.push_back(parse_stage((*v)[i], where + "." + key + "[" + std::to_string(i) + "]"));
  }
  return stages;
}

void parse_backbone(const json& obj, BackboneConfig& c, const std::string& where) {
  check_keys(obj, where,
             {"input_frames", "input_size", "input_channels", "trunk", "head", "context"});
  c.input_frames = get_int(obj, "input_frames", c.input_frames, where);
  c.input_size = get_int(obj, "input_size", c.input_size, where);
  c.input_channels = get_int(obj, "input_channels", c.input_channels, where);
  c.trunk = parse_stages(obj, "trunk", c.trunk, where);
  c.head = parse_stages(obj, "head", c.head, where);
  c.context = parse_stages(obj, "context", c.context, where);
}

void parse_model(const json& obj, ModelConfig& m) {
  const std::string where = "model";
  check_keys(obj, where,
             {"num_classes", "pool_size", "rpn_hidden", "per_class_regression",
              "use_context", "static_backbone", "anchor_scales", "anchor_aspects",
              "proposals", "postprocess", "backbone"});
  m.num_classes = get_int(obj, "num_classes", m.num_classes, where);
  m.pool_size = get_int(obj, "pool_size", m.pool_size, where);
  m.rpn_hidden = get_int(obj, "rpn_hidden", m.rpn_hidden, where);
  m.per_class_regression =
      get_bool(obj, "per_class_regression", m.per_class_regression, where);
  m.use_context = get_bool(obj, "use_context", m.use_context, where);
  m.static_backbone = get_bool(obj, "static_backbone", m.static_backbone, where);
  if (const json* v = find(obj, "anchor_scales")) {
    m.anchors.scales = get_number_list(*v, where + ".anchor_scales");
  }
  if (const json* v = find(obj, "anchor_aspects")) {
    m.anchors.aspects = get_number_list(*v, where + ".anchor_aspects");
  }
  if (const json* v = find(obj, "proposals")) {
    const std::string w = where + ".proposals";
    check_keys(*v, w, {"pre_nms_top_n", "post_nms_top_n", "nms_threshold"});
    m.proposals.pre_nms_top_n = get_int(*v, "pre_nms_top_n", m.proposals.pre_nms_top_n, w);
    m.proposals.post_nms_top_n =
        get_int(*v, "post_nms_top_n", m.proposals.post_nms_top_n, w);
    m.proposals.nms_threshold =
        get_double(*v, "nms_threshold", m.proposals.nms_threshold, w);
  }
  if (const json* v = find(obj, "postprocess")) {
    const std::string w = where + ".postprocess";
    check_keys(*v, w, {"score_floor", "nms_threshold", "max_detections"});
    m.postprocess.score_floor = get_double(*v, "score_floor", m.postprocess.score_floor, w);
    m.postprocess.nms_threshold =
        get_double(*v, "nms_threshold", m.postprocess.nms_threshold, w);
    m.postprocess.max_detections =
        get_int(*v, "max_detections", m.postprocess.max_detections, w);
  }
  if (const json* v = find(obj, "backbone")) {
    parse_backbone(*v, m.backbone, where + ".backbone");
  }
}

void parse_train(const json& obj, TrainConfig& t) {
  const std::string where = "train";
  check_keys(obj, where,
             {"base_lr", "momentum", "total_steps", "batch_size", "seed", "augment",
              "rpn_cls_weight", "rpn_reg_weight", "cls_weight", "reg_weight", "rpn",
              "roi", "augmentation"});
  t.base_lr = get_double(obj, "base_lr", t.base_lr, where);
  t.momentum = get_double(obj, "momentum", t.momentum, where);
  t.total_steps = get_int(obj, "total_steps", t.total_steps, where);
  t.batch_size = get_int(obj, "batch_size", t.batch_size, where);
  t.seed = get_seed(obj, "seed", t.seed, where);
  t.augment = get_bool(obj, "augment", t.augment, where);
  t.rpn_cls_weight = get_double(obj, "rpn_cls_weight", t.rpn_cls_weight, where);
  t.rpn_reg_weight = get_double(obj, "rpn_reg_weight", t.rpn_reg_weight, where);
  t.cls_weight = get_double(obj, "cls_weight", t.cls_weight, where);
  t.reg_weight = get_double(obj, "reg_weight", t.reg_weight, where);
  if (const json* v = find(obj, "rpn")) {
    const std::string w = where + ".rpn";
    check_keys(*v, w, {"positive_iou", "negative_iou", "positive_cap", "negative_cap"});
    t.rpn.positive_iou = get_double(*v, "positive_iou", t.rpn.positive_iou, w);
    t.rpn.negative_iou = get_double(*v, "negative_iou", t.rpn.negative_iou, w);
    t.rpn.positive_cap = get_int(*v, "positive_cap", t.rpn.positive_cap, w);
    t.rpn.negative_cap = get_int(*v, "negative_cap", t.rpn.negative_cap, w);
  }
  if (const json* v = find(obj, "roi")) {
    const std::string w = where + ".roi";
    check_keys(*v, w, {"positive_iou", "rois_per_clip", "positive_cap"});
    t.roi.positive_iou = get_double(*v, "positive_iou", t.roi.positive_iou, w);
    t.roi.rois_per_clip = get_int(*v, "rois_per_clip", t.roi.rois_per_clip, w);
    t.roi.positive_cap = get_int(*v, "positive_cap", t.roi.positive_cap, w);
  }
  if (const json* v = find(obj, "augmentation")) {
    const std::string w = where + ".augmentation";
    check_keys(*v, w, {"flip_prob", "min_crop_scale", "crop_retries"});
    t.augmentation.flip_prob = get_double(*v, "flip_prob", t.augmentation.flip_prob, w);
    t.augmentation.min_crop_scale =
        get_double(*v, "min_crop_scale", t.augmentation.min_crop_scale, w);
    t.augmentation.crop_retries =
        get_int(*v, "crop_retries", t.augmentation.crop_retries, w);
  }
}

void parse_synth(const json& obj, SynthSection& s) {
  const std::string where = "synth";
  check_keys(obj, where, {"train_clips", "val_clips", "frames", "size", "min_actors",
                          "max_actors", "seed"});
  s.train_clips = get_int(obj, "train_clips", s.train_clips, where);
  s.val_clips = get_int(obj, "val_clips", s.val_clips, where);
  s.frames = get_int(obj, "frames", s.frames, where);
  s.size = get_int(obj, "size", s.size, where);
  s.min_actors = get_int(obj, "min_actors", s.min_actors, where);
  s.max_actors = get_int(obj, "max_actors", s.max_actors, where);
  s.seed = get_seed(obj, "seed", s.seed, where);
}

json stage_to_json(const StageSpec& s) {
  return json{{"channels", s.channels},
              {"kernel", s.kernel},
              {"stride", s.stride},
              {"pool", s.pool},
              {"pool_stride", s.pool_stride}};
}

json stages_to_json(const std::vector<StageSpec>& stages) {
  json arr = json::array();
  for (const StageSpec& s : stages) arr.push_back(stage_to_json(s));
  return arr;
}

}  // namespace

data::SynthConfig SynthSection::split(const std::string& name, int clips) const {
  data::SynthConfig c;
  c.num_clips = clips;
  c.frames = frames;
  c.size = size;
  c.min_actors = min_actors;
  c.max_actors = max_actors;
  c.seed = seed;
  c.split = name;
  return c;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  check_keys(root, "config", {"model", "train", "synth"});

  ExperimentConfig cfg;
  if (const json* v = find(root, "model")) parse_model(*v, cfg.model);
  if (const json* v = find(root, "train")) parse_train(*v, cfg.train);
  if (const json* v = find(root, "synth")) parse_synth(*v, cfg.synth);

  cfg.model.validate();
  cfg.train.validate();
  if (cfg.synth.train_clips < 0 || cfg.synth.val_clips < 0) {
    fail("synth clip counts must be non-negative");
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

std::string serialize_experiment_config(const ExperimentConfig& config) {
  const ModelConfig& m = config.model;
  const TrainConfig& t = config.train;
  const SynthSection& s = config.synth;
  json root;
  root["model"] = {
      {"num_classes", m.num_classes},
      {"pool_size", m.pool_size},
      {"rpn_hidden", m.rpn_hidden},
      {"per_class_regression", m.per_class_regression},
      {"use_context", m.use_context},
      {"static_backbone", m.static_backbone},
      {"anchor_scales", m.anchors.scales},
      {"anchor_aspects", m.anchors.aspects},
      {"proposals",
       {{"pre_nms_top_n", m.proposals.pre_nms_top_n},
        {"post_nms_top_n", m.proposals.post_nms_top_n},
        {"nms_threshold", m.proposals.nms_threshold}}},
      {"postprocess",
       {{"score_floor", m.postprocess.score_floor},
        {"nms_threshold", m.postprocess.nms_threshold},
        {"max_detections", m.postprocess.max_detections}}},
      {"backbone",
       {{"input_frames", m.backbone.input_frames},
        {"input_size", m.backbone.input_size},
        {"input_channels", m.backbone.input_channels},
        {"trunk", stages_to_json(m.backbone.trunk)},
        {"head", stages_to_json(m.backbone.head)},
        {"context", stages_to_json(m.backbone.context)}}},
  };
  root["train"] = {
      {"base_lr", t.base_lr},
      {"momentum", t.momentum},
      {"total_steps", t.total_steps},
      {"batch_size", t.batch_size},
      {"seed", t.seed},
      {"augment", t.augment},
      {"rpn_cls_weight", t.rpn_cls_weight},
      {"rpn_reg_weight", t.rpn_reg_weight},
      {"cls_weight", t.cls_weight},
      {"reg_weight", t.reg_weight},
      {"rpn",
       {{"positive_iou", t.rpn.positive_iou},
        {"negative_iou", t.rpn.negative_iou},
        {"positive_cap", t.rpn.positive_cap},
        {"negative_cap", t.rpn.negative_cap}}},
      {"roi",
       {{"positive_iou", t.roi.positive_iou},
        {"rois_per_clip", t.roi.rois_per_clip},
        {"positive_cap", t.roi.positive_cap}}},
      {"augmentation",
       {{"flip_prob", t.augmentation.flip_prob},
        {"min_crop_scale", t.augmentation.min_crop_scale},
        {"crop_retries", t.augmentation.crop_retries}}},
  };
  root["synth"] = {
      {"train_clips", s.train_clips}, {"val_clips", s.val_clips}, {"frames", s.frames},
      {"size", s.size},               {"min_actors", s.min_actors},
      {"max_actors", s.max_actors},   {"seed", s.seed},
  };
  return root.dump(2) + "\n";
}

}  // namespace stal
