// Command line front end. Thin: all behavior lives in the command layer,
// this file only parses flags and maps exceptions to exit codes
// (1 usage, 2 data, 3 numerical).
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <multinet/multinet.hpp>

namespace {

struct TaskFlags {
  bool seg = true, det = true, cls = true;
};

TaskFlags parse_tasks(const std::vector<std::string>& tasks) {
  if (tasks.empty()) return {};
  TaskFlags f{false, false, false};
  for (const auto& t : tasks) {
    if (t == "seg") f.seg = true;
    else if (t == "det") f.det = true;
    else if (t == "cls") f.cls = true;
    else if (t == "all") f = {true, true, true};
    else throw multinet::usage_error("unknown task '" + t + "' (expected seg, det, cls or all)");
  }
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MultiNet: joint semantic segmentation, detection and scene classification"};
  app.require_subcommand(1);

  multinet::SynthOptions synth_opt;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic street-scene dataset");
  synth->add_option("--out", synth_opt.out_dir, "Output dataset directory")->required();
  synth->add_option("--count", synth_opt.count, "Number of samples");
  synth->add_option("--seed", synth_opt.seed, "Generator seed");
  synth->add_option("--width", synth_opt.width, "Image width (multiple of 32)");
  synth->add_option("--height", synth_opt.height, "Image height (multiple of 32)");
  synth->add_option("--max-vehicles", synth_opt.max_vehicles, "Maximum vehicles per scene");
  synth->add_option("--train-fraction", synth_opt.train_fraction, "Fraction of samples in the train split");
  synth->add_flag("--force", synth_opt.force, "Write into a non-empty directory");

  multinet::TrainOptions train_opt;
  std::vector<std::string> train_no_augment;
  CLI::App* train = app.add_subcommand("train", "Train the joint model");
  train->add_option("--data", train_opt.data_dir, "Dataset directory")->required();
  train->add_option("--config", train_opt.config_file, "Config file (key = value, # comments)");
  train->add_option("--out", train_opt.out_checkpoint, "Output checkpoint path");
  train->add_option("--log", train_opt.log_file, "Training log path (default: <out>.log)");
  train->add_option("--init", train_opt.init_checkpoint, "Checkpoint to resume from");
  train->add_option("--steps", train_opt.steps, "Optimization steps");
  train->add_option("--seed", train_opt.seed, "Training seed");
  train->add_option("--lr", train_opt.learning_rate, "Learning rate");
  train->add_option("--weight-decay", train_opt.weight_decay, "Decoupled weight decay");
  train->add_option("--reg-weight", train_opt.reg_weight, "Detection regression loss weight");
  train->add_option("--dropout", train_opt.dropout_p, "Classification dropout probability");
  train->add_option("--seg-batch", train_opt.seg_batch, "Segmentation batch size (0 disables the task)");
  train->add_option("--det-batch", train_opt.det_batch, "Detection batch size (0 disables the task)");
  train->add_option("--cls-batch", train_opt.cls_batch, "Classification batch size (0 disables the task)");
  CLI::Option* no_aug = train->add_flag("--no-augment", "Disable data augmentation");

  multinet::InferOptions infer_opt;
  std::vector<std::string> infer_tasks;
  CLI::App* infer = app.add_subcommand("infer", "Run joint inference on one image");
  infer->add_option("--ckpt", infer_opt.checkpoint, "Model checkpoint")->required();
  infer->add_option("--image", infer_opt.image_path, "Input PPM image")->required();
  infer->add_option("--out-prefix", infer_opt.out_prefix, "Prefix for output files");
  infer->add_option("--tasks", infer_tasks, "Comma-separated tasks (seg,det,cls)")->delimiter(',');
  infer->add_option("--conf-threshold", infer_opt.conf_threshold, "Detection confidence threshold");
  infer->add_option("--nms-iou", infer_opt.nms_iou, "NMS IoU threshold");
  CLI::Option* no_nms = infer->add_flag("--no-nms", "Skip non-max suppression");
  CLI::Option* use_initial = infer->add_flag("--initial", "Decode the first detection stage instead of the refined one");

  multinet::EvalOptions eval_opt;
  std::vector<std::string> eval_tasks;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--ckpt", eval_opt.checkpoint, "Model checkpoint")->required();
  eval->add_option("--data", eval_opt.data_dir, "Dataset directory")->required();
  eval->add_option("--split", eval_opt.split, "Split: train, val or all");
  eval->add_option("--tasks", eval_tasks, "Comma-separated tasks (seg,det,cls)")->delimiter(',');
  eval->add_option("--conf-threshold", eval_opt.conf_threshold, "Detection confidence threshold");
  eval->add_option("--nms-iou", eval_opt.nms_iou, "NMS IoU threshold");
  CLI::Option* eval_initial = eval->add_flag("--initial", "Evaluate the first detection stage");

  multinet::BenchOptions bench_opt;
  std::vector<std::string> bench_tasks;
  CLI::App* bench = app.add_subcommand("bench", "Measure inference speed");
  bench->add_option("--ckpt", bench_opt.checkpoint, "Checkpoint (omit for a random-initialized model)");
  bench->add_option("--width", bench_opt.width, "Input width when no checkpoint is given");
  bench->add_option("--height", bench_opt.height, "Input height when no checkpoint is given");
  bench->add_option("--seed", bench_opt.seed, "Init seed when no checkpoint is given");
  bench->add_option("--iters", bench_opt.iterations, "Timed iterations");
  bench->add_option("--warmup", bench_opt.warmup, "Untimed warmup iterations");
  bench->add_option("--tasks", bench_tasks, "Comma-separated tasks (seg,det,cls)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      multinet::run_synth(synth_opt, std::cout);
    } else if (train->parsed()) {
      if (no_aug->count()) train_opt.augment = false;
      multinet::run_train(train_opt, std::cout);
    } else if (infer->parsed()) {
      const TaskFlags f = parse_tasks(infer_tasks);
      infer_opt.seg = f.seg;
      infer_opt.det = f.det;
      infer_opt.cls = f.cls;
      if (no_nms->count()) infer_opt.use_nms = false;
      if (use_initial->count()) infer_opt.use_refined = false;
      multinet::run_infer(infer_opt, std::cout);
    } else if (eval->parsed()) {
      const TaskFlags f = parse_tasks(eval_tasks);
      eval_opt.seg = f.seg;
      eval_opt.det = f.det;
      eval_opt.cls = f.cls;
      if (eval_initial->count()) eval_opt.use_refined = false;
      multinet::run_eval(eval_opt, std::cout);
    } else if (bench->parsed()) {
      const TaskFlags f = parse_tasks(bench_tasks);
      bench_opt.seg = f.seg;
      bench_opt.det = f.det;
      bench_opt.cls = f.cls;
      multinet::run_bench(bench_opt, std::cout);
    }
  } catch (const multinet::usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const multinet::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const multinet::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
