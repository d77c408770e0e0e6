#include "dtigeo/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dtigeo/dge.hpp"
#include "dtigeo/error.hpp"
#include "dtigeo/evaluate.hpp"
#include "dtigeo/geometry.hpp"
#include "dtigeo/gradscheme.hpp"
#include "dtigeo/nifti.hpp"
#include "dtigeo/numeric.hpp"
#include "dtigeo/phantom.hpp"
#include "dtigeo/refine.hpp"
#include "dtigeo/tensorfit.hpp"

namespace dtigeo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  bool json = false;
  std::optional<unsigned> threads;
  std::uint64_t seed = 0;
  bool overwrite = false;

  unsigned thread_count() const {
    if (threads) return std::max(1u, *threads);
    if (const char* env = std::getenv("DTI_THREADS"); env && *env) {
      unsigned n = 0;
      const char* end = env + std::char_traits<char>::length(env);
      const auto [ptr, ec] = std::from_chars(env, end, n);
      if (ec != std::errc() || ptr != end) throw FormatError("DTI_THREADS must be a positive integer");
      return std::max(1u, n);
    }
    return 1;
  }
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing input: " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Volume read_volume(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw InputError("missing input: " + path.string());
  return read_nifti(path);
}

void claim_output(const fs::path& path, const Common& c) {
  std::error_code ec;
  if (fs::exists(path, ec) && !c.overwrite)
    throw InputError("output exists: " + path.string() + " (pass --overwrite to replace it)");
  if (path.has_parent_path() && !fs::is_directory(path.parent_path(), ec))
    throw InputError("output directory does not exist: " + path.parent_path().string());
}

void write_text(const fs::path& path, const std::string& text, const Common& c) {
  claim_output(path, c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw InputError("cannot write " + path.string());
}

void write_volume(const Volume& v, const fs::path& path, DataType dtype, const Common& c) {
  claim_output(path, c);
  write_nifti(v, path, dtype);
}

GradientScheme read_scheme(const fs::path& bvecs, const fs::path& bvals) {
  const std::string vecs = read_text(bvecs);
  const std::string vals = read_text(bvals);
  return parse_fsl_tables(vecs, vals);
}

Volume full_mask(const Volume& like) {
  Volume mask = Volume::like(like);
  mask.dtype = DataType::uint8;
  std::fill(mask.data.begin(), mask.data.end(), 1.0);
  return mask;
}

Volume mask_or_full(const std::string& path, const Volume& like) {
  return path.empty() ? full_mask(like) : read_volume(path);
}

DataType dtype_option(const std::string& name) { return parse_data_type(name); }

std::string shape_text(const std::array<std::size_t, 5>& s) {
  std::ostringstream out;
  out << '(' << s[0] << ',' << s[1] << ',' << s[2] << ',' << s[3] << ',' << s[4] << ')';
  return out.str();
}

LossWeights weights_of(double alpha, double beta, double gamma) {
  LossWeights w{alpha, beta, gamma};
  w.validate();
  return w;
}

void add_weight_options(CLI::App* cmd, double& alpha, double& beta, double& gamma) {
  cmd->add_option("--alpha", alpha, "weight of the coefficient L1 term")->capture_default_str();
  cmd->add_option("--beta", beta, "weight of the delta2 term")->capture_default_str();
  cmd->add_option("--gamma", gamma, "weight of the FA term")->capture_default_str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion tensor fitting, metrics, geometry loss and evaluation"};
  app.name("dtigeo");
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_flag("--json", common.json, "machine-readable output and diagnostics");
  app.add_option("--threads", common.threads, "worker threads (default: $DTI_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", common.seed, "seed for every random draw")->capture_default_str();
  app.add_flag("--overwrite", common.overwrite, "replace existing outputs");

  std::function<void()> action;

  // fit
  std::string fit_dwi, fit_bvecs, fit_bvals, fit_mask, fit_out, fit_indices, fit_dtype = "float64";
  auto* fit = app.add_subcommand("fit", "log-linear least-squares tensor fit");
  fit->add_option("--dwi", fit_dwi, "4D DWI volume")->required();
  fit->add_option("--bvecs", fit_bvecs, "FSL bvecs table")->required();
  fit->add_option("--bvals", fit_bvals, "FSL bvals table")->required();
  fit->add_option("--mask", fit_mask, "brain mask (default: every voxel)");
  fit->add_option("--indices", fit_indices, "index file from subsample: fit only those volumes");
  fit->add_option("--out", fit_out, "6-component tensor volume")->required();
  fit->add_option("--dtype", fit_dtype, "output sample type")->capture_default_str();
  fit->callback([&] {
    action = [&] {
      const GradientScheme full = read_scheme(fit_bvecs, fit_bvals);
      Volume dwi = read_volume(fit_dwi);
      GradientScheme scheme = full;
      if (!fit_indices.empty()) {
        const auto picked = fitting_indices(full, parse_selection(read_text(fit_indices)));
        if (dwi.frames() != full.size()) throw FormatError("DWI frame count does not match the gradient table");
        dwi = select_frames(dwi, picked);
        scheme = full.subset(picked);
      }
      const Volume mask = mask_or_full(fit_mask, dwi);
      const DataType dtype = dtype_option(fit_dtype);
      const TensorVolume field = fit_volume(dwi, scheme, mask, common.thread_count());
      write_volume(to_volume(field, dtype), fit_out, dtype, common);
      if (common.json)
        out << json{{"invalid_voxels", field.invalid_voxels}, {"volumes", scheme.size()}, {"out", fit_out}}.dump()
            << '\n';
      else
        out << "invalid voxels: " << field.invalid_voxels << '\n';
    };
  });

  // metrics
  std::string met_tensor, met_prefix, met_dtype = "float64";
  auto* metrics = app.add_subcommand("metrics", "FA, MD, AD and RD maps of a tensor volume");
  metrics->add_option("--tensor", met_tensor, "6-component tensor volume")->required();
  metrics->add_option("--out-prefix", met_prefix, "output prefix; writes <prefix>FA.nii.gz etc.")->required();
  metrics->add_option("--dtype", met_dtype, "output sample type")->capture_default_str();
  metrics->callback([&] {
    action = [&] {
      const TensorVolume field = tensor_volume_from(read_volume(met_tensor));
      const DataType dtype = dtype_option(met_dtype);
      const ScalarMaps maps = scalar_maps(field, common.thread_count());
      json written = json::array();
      for (const auto& [name, vol] : {std::pair{"FA", &maps.fa}, std::pair{"MD", &maps.md},
                                      std::pair{"AD", &maps.ad}, std::pair{"RD", &maps.rd}}) {
        const std::string path = met_prefix + name + ".nii.gz";
        write_volume(*vol, path, dtype, common);
        written.push_back(path);
      }
      if (common.json)
        out << json{{"written", written}}.dump() << '\n';
      else
        for (const auto& p : written) out << "wrote " << p.get<std::string>() << '\n';
    };
  });

  // subsample
  std::string sub_bvecs, sub_bvals, sub_out;
  std::size_t sub_k = 6;
  auto* subsample = app.add_subcommand("subsample", "Kennard-Stone selection of evenly spread directions");
  subsample->add_option("--bvecs", sub_bvecs, "FSL bvecs table")->required();
  subsample->add_option("--bvals", sub_bvals, "FSL bvals table")->required();
  subsample->add_option("-k,--k", sub_k, "directions to keep")->capture_default_str();
  subsample->add_option("--out", sub_out, "output prefix; writes <prefix>indices.txt, bvecs, bvals")->required();
  subsample->callback([&] {
    action = [&] {
      const GradientScheme scheme = read_scheme(sub_bvecs, sub_bvals);
      const SubsetSelection sel = kennard_stone_select(scheme, sub_k);
      const GradientScheme subset = scheme.subset(fitting_indices(scheme, sel));
      const auto [vecs, vals] = format_fsl_tables(subset);
      write_text(sub_out + "indices.txt", format_selection(sel), common);
      write_text(sub_out + "bvecs", vecs, common);
      write_text(sub_out + "bvals", vals, common);
      if (common.json) {
        out << json{{"indices", sel.indices}, {"spread", sel.spread}}.dump() << '\n';
      } else {
        out << "spread " << sel.spread << " rad\nindices";
        for (std::size_t i : sel.indices) out << ' ' << i;
        out << '\n';
      }
    };
  });

  // evaluate
  std::string ev_pred, ev_gt, ev_mask, ev_tracts, ev_out, ev_csv, ev_bars;
  auto* evaluate = app.add_subcommand("evaluate", "MAE, SSIM and per-tract FA error against a reference");
  evaluate->add_option("--pred", ev_pred, "predicted tensor volume")->required();
  evaluate->add_option("--gt", ev_gt, "reference tensor volume")->required();
  evaluate->add_option("--mask", ev_mask, "evaluation mask (default: every voxel)");
  evaluate->add_option("--tracts", ev_tracts, "directory of named tract masks");
  evaluate->add_option("--out", ev_out, "JSON report")->required();
  evaluate->add_option("--csv", ev_csv, "flat CSV report");
  evaluate->add_option("--bars", ev_bars, "per-tract name,value file");
  evaluate->callback([&] {
    action = [&] {
      const Volume pred_v = read_volume(ev_pred);
      const Volume gt_v = read_volume(ev_gt);
      const TensorVolume pred = tensor_volume_from(pred_v);
      const TensorVolume gt = tensor_volume_from(gt_v);
      const Volume mask = mask_or_full(ev_mask, pred_v);
      const NamedMasks tracts = ev_tracts.empty() ? NamedMasks{} : load_tract_masks(ev_tracts);
      const EvalReport report = evaluate_tensors(pred, gt, mask, tracts, common.thread_count());
      const json j = report;
      write_text(ev_out, j.dump(2) + "\n", common);
      if (!ev_csv.empty()) write_text(ev_csv, format_report_csv(report), common);
      if (!ev_bars.empty()) write_text(ev_bars, format_tract_bars(report), common);
      if (common.json) {
        out << j.dump() << '\n';
      } else {
        for (const auto& [name, s] : report.mae)
          out << name << ": mae " << s.mean << " (sd " << s.std << "), ssim " << report.ssim.at(name) << '\n';
        for (const TractEntry& t : report.tracts) {
          out << "tract " << t.name << ": ";
          if (t.fa)
            out << "fa mae " << t.fa->mean << '\n';
          else
            out << "empty mask\n";
        }
      }
    };
  });

  // loss
  std::string loss_pred, loss_gt, loss_mask, loss_grad;
  double alpha = 1e6, beta = 1e6, gamma = 10.0;
  bool gradcheck = false;
  auto* loss = app.add_subcommand("loss", "geometry-constrained loss between two tensor volumes");
  loss->add_option("--pred", loss_pred, "predicted tensor volume")->required();
  loss->add_option("--gt", loss_gt, "reference tensor volume")->required();
  loss->add_option("--mask", loss_mask, "loss mask (default: every voxel)");
  add_weight_options(loss, alpha, beta, gamma);
  loss->add_option("--grad-out", loss_grad, "write the gradient as a 6-component volume");
  loss->add_flag("--gradcheck", gradcheck, "compare the gradient with central finite differences");
  loss->callback([&] {
    action = [&] {
      const Volume pred_v = read_volume(loss_pred);
      const TensorVolume pred = tensor_volume_from(pred_v);
      const TensorVolume gt = tensor_volume_from(read_volume(loss_gt));
      const Volume mask = mask_or_full(loss_mask, pred_v);
      const LossWeights w = weights_of(alpha, beta, gamma);
      const LossReport report = geo_loss(pred, gt, mask, w, LossOptions{true, common.thread_count()});
      if (!loss_grad.empty()) write_volume(gradient_volume(report, pred), loss_grad, DataType::float64, common);
      json j = report;
      std::optional<GradientCheck> check;
      if (gradcheck) {
        check = check_gradient(pred, gt, mask, w);
        j["gradcheck_max_relative_error"] = check->max_relative_error;
        j["gradcheck_coefficients"] = check->coefficients;
        j["gradcheck_skipped"] = check->skipped;
      }
      out << j.dump(common.json ? -1 : 2) << '\n';
      if (check && !(check->max_relative_error <= 1e-4))
        throw NumericalError("gradient check failed: max relative error " +
                             std::to_string(check->max_relative_error));
    };
  });

  // synth
  std::string syn_kind = "isotropic", syn_out;
  std::vector<std::size_t> syn_shape{8, 8, 8};
  std::optional<double> syn_snr;
  std::size_t syn_dirs = 90;
  auto* synth = app.add_subcommand("synth", "write a synthetic phantom directory");
  synth->add_option("--kind", syn_kind, "isotropic, crossing or gradient-fa")->capture_default_str();
  synth->add_option("--shape", syn_shape, "grid extents X,Y,Z")->delimiter(',')->expected(3);
  synth->add_option("--snr", syn_snr, "Rician noise level S0/sigma (default: noiseless)");
  synth->add_option("--directions", syn_dirs, "diffusion-weighted directions")->capture_default_str();
  synth->add_option("--out", syn_out, "output directory")->required();
  synth->callback([&] {
    action = [&] {
      PhantomOptions opt;
      opt.kind = parse_phantom_kind(syn_kind);
      opt.shape = {syn_shape[0], syn_shape[1], syn_shape[2]};
      opt.seed = common.seed;
      opt.snr = syn_snr;
      opt.directions = syn_dirs;
      const Phantom ph = synth_phantom(opt);
      std::error_code ec;
      fs::create_directories(syn_out, ec);
      if (ec) throw InputError("cannot create directory " + syn_out);
      for (const char* name : {"dwi.nii.gz", "tensor.nii.gz", "mask.nii.gz", "bvecs", "bvals"})
        claim_output(fs::path(syn_out) / name, common);
      write_phantom(ph, syn_out);
      if (common.json)
        out << json{{"out", syn_out}, {"kind", to_string(opt.kind)}, {"volumes", ph.scheme.size()}}.dump() << '\n';
      else
        out << "wrote " << to_string(opt.kind) << " phantom to " << syn_out << '\n';
    };
  });

  // dge-demo
  std::size_t dge_channels = 4, dge_batch = 1, dge_size = 8;
  std::string dge_params, dge_output;
  auto* dge = app.add_subcommand("dge-demo", "run the gradient-encoding block on seeded random input");
  dge->add_option("--channels", dge_channels, "feature channels")->capture_default_str()->check(CLI::PositiveNumber);
  dge->add_option("--batch", dge_batch, "batch size")->capture_default_str()->check(CLI::PositiveNumber);
  dge->add_option("--size", dge_size, "cubic spatial extent")->capture_default_str()->check(CLI::Range(3, 256));
  dge->add_option("--save-params", dge_params, "write the seeded parameters (DGE1)");
  dge->add_option("--save-output", dge_output, "write input, output features and embeddings (DGE1)");
  dge->callback([&] {
    action = [&] {
      const DgeParams params = DgeParams::seeded(dge_channels, common.seed);
      FeatureMap x = FeatureMap::zeros({dge_batch, dge_channels, dge_size, dge_size, dge_size});
      Rng rng(common.seed ^ 0x9e3779b97f4a7c15ULL);
      for (double& v : x.data) v = rng.normal();
      const GradientEmbedding e0 =
          embed_bvecs(std::vector<GradientScheme>(dge_batch, canonical_six_direction_scheme()), params);
      const DgeOutput y = dge_forward(x, e0, params);
      if (!dge_params.empty()) {
        claim_output(dge_params, common);
        write_dge_arrays(dge_params, to_arrays(params));
      }
      if (!dge_output.empty()) {
        claim_output(dge_output, common);
        write_dge_arrays(dge_output, {to_array(x), to_array(e0), to_array(y.features), to_array(y.embedding)});
      }
      if (common.json) {
        out << json{{"input", x.shape},
                    {"output", y.features.shape},
                    {"embedding_in", {e0.rows(), e0.cols()}},
                    {"embedding_out", {y.embedding.rows(), y.embedding.cols()}}}
                   .dump()
            << '\n';
      } else {
        out << "features " << shape_text(x.shape) << " -> " << shape_text(y.features.shape) << '\n'
            << "embedding (" << e0.rows() << ',' << e0.cols() << ") -> (" << y.embedding.rows() << ','
            << y.embedding.cols() << ")\n";
      }
    };
  });

  // refine
  std::string ref_init, ref_gt, ref_mask, ref_out, ref_traj;
  double ref_alpha = 1e6, ref_beta = 1e6, ref_gamma = 10.0, ref_perturb = 0.0;
  RefineOptions ref_opt;
  bool no_line_search = false;
  auto* refine = app.add_subcommand("refine", "gradient descent on the tensor field under the geometry loss");
  refine->add_option("--init", ref_init, "starting tensor volume")->required();
  refine->add_option("--gt", ref_gt, "reference tensor volume")->required();
  refine->add_option("--mask", ref_mask, "loss mask (default: every voxel)");
  add_weight_options(refine, ref_alpha, ref_beta, ref_gamma);
  refine->add_option("--steps", ref_opt.steps, "descent steps")->capture_default_str()->check(CLI::PositiveNumber);
  refine->add_option("--lr", ref_opt.lr, "initial step size")->capture_default_str();
  refine->add_option("--perturb", ref_perturb, "add seeded Gaussian noise of this SD to the starting coefficients");
  refine->add_flag("--no-line-search", no_line_search, "take every step without halving");
  refine->add_option("--out", ref_out, "refined tensor volume")->required();
  refine->add_option("--trajectory", ref_traj, "loss trajectory CSV");
  refine->callback([&] {
    action = [&] {
      const Volume init_v = read_volume(ref_init);
      TensorVolume init = tensor_volume_from(init_v);
      const TensorVolume gt = tensor_volume_from(read_volume(ref_gt));
      const Volume mask = mask_or_full(ref_mask, init_v);
      if (ref_perturb < 0.0) throw FormatError("--perturb must be non-negative");
      if (ref_perturb > 0.0) {
        Rng rng(common.seed);
        for (auto& t : init.tensors)
          for (int j = 0; j < 6; ++j) t.d[j] += ref_perturb * rng.normal();
      }
      ref_opt.line_search = !no_line_search;
      ref_opt.threads = common.thread_count();
      const RefineResult r = smoke_refine(init, gt, mask, weights_of(ref_alpha, ref_beta, ref_gamma), ref_opt);
      write_volume(to_volume(r.field, DataType::float64), ref_out, DataType::float64, common);
      if (!ref_traj.empty()) write_text(ref_traj, format_trajectory(r.trajectory), common);
      if (common.json)
        out << json{{"initial_l_geo", r.trajectory.front()},
                    {"final_l_geo", r.trajectory.back()},
                    {"steps", r.trajectory.size() - 1},
                    {"rejected_steps", r.rejected_steps}}
                   .dump()
            << '\n';
      else
        out << "l_geo " << r.trajectory.front() << " -> " << r.trajectory.back() << " in "
            << r.trajectory.size() - 1 << " steps\n";
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  }

  auto report = [&](int code, const std::string& message) {
    if (common.json)
      err << json{{"error", message}, {"exit_code", code}}.dump() << '\n';
    else
      err << "error: " << message << '\n';
    return code;
  };
  try {
    if (action) action();
    return exit_ok;
  } catch (const InputError& e) {
    return report(exit_input, e.what());
  } catch (const FormatError& e) {
    return report(exit_format, e.what());
  } catch (const NumericalError& e) {
    return report(exit_numerical, e.what());
  } catch (const std::exception& e) {
    return report(exit_usage, e.what());
  }
}

}  // namespace dtigeo
