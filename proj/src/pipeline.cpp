#include "qmt/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "qmt/container.hpp"
#include "qmt/rng.hpp"
#include "qmt/sigmodel.hpp"

namespace qmt {

std::vector<double> default_te_ms() {
  return {7.0, 16.0, 25.0, 34.0, 43.0, 52.0, 62.0, 71.0};
}

void ReproProfile::validate() const {
  if (n_train < 1 || n_val < 1 || n_test < 1)
    fail(ErrorCode::invalid_argument, "repro: need train/val/test phantoms");
  if (r_values.empty()) fail(ErrorCode::invalid_argument, "repro: need at least one R");
  netspec.validate();
  train_config.validate();
  ista.validate();
}

ReproProfile desk_profile(std::uint64_t seed) {
  ReproProfile p;
  p.name = "desk";
  p.seed = seed;
  p.netspec.levels = 3;
  p.netspec.base_filters = 16;
  p.train_config.epochs = 60;
  p.train_config.seed = seed;
  return p;
}

ReproProfile smoke_profile(std::uint64_t seed) {
  ReproProfile p;
  p.name = "smoke";
  p.seed = seed;
  p.ny = 32;
  p.nx = 32;
  p.n_objects = 4;
  p.n_train = 3;
  p.n_val = 1;
  p.n_test = 2;
  p.r_values = {5.0};
  p.library_size = 8;
  p.netspec.levels = 2;
  p.netspec.base_filters = 4;
  p.train_config.epochs = 2;
  p.train_config.seed = seed;
  return p;
}

ReproProfile profile_by_name(const std::string& name, std::uint64_t seed) {
  if (name == "desk") return desk_profile(seed);
  if (name == "smoke") return smoke_profile(seed);
  fail(ErrorCode::invalid_argument, "unknown profile: " + name);
}

namespace {

ParamMaps make_seeded_phantom(const ReproProfile& profile, std::uint64_t role,
                              int index) {
  PhantomSpec spec;
  spec.ny = profile.ny;
  spec.nx = profile.nx;
  spec.n_objects = profile.n_objects;
  spec.tissue_table = default_tissue_table();
  Rng derive = Rng::stream(profile.seed, {role, static_cast<std::uint64_t>(index)});
  spec.seed = derive.next();
  return make_phantom(spec);
}

// Reference maps: T2 from the fully sampled fit, region from the known
// phantom labels (zeroed where the fit found no signal).
ParamMaps reference_maps(const TrainPhantom& phantom) {
  ParamMaps ref = phantom.truth;
  const std::size_t n = ref.plane();
  for (std::size_t p = 0; p < n; ++p) {
    ref.i0[p] = static_cast<float>(phantom.ref_i0[p]);
    ref.t2_ms[p] = static_cast<float>(phantom.ref_t2_ms[p]);
    if (!(ref.i0[p] > 0.0f)) ref.roi_labels[p] = 0;
  }
  ref.validate();
  return ref;
}

EchoSeries zero_filled_series(const TrainPhantom& phantom, const MaskSet& mask) {
  TrainSample sample = make_sample(phantom, mask);
  Stack zf = sample.d;
  for (int j = 0; j < zf.t; ++j) ifft2_centered(zf.ny, zf.nx, zf.echo(j));
  return series_from_stack(zf, phantom.te_ms);
}

ParamMaps fit_series_maps(const EchoSeries& series) { return fit_pixelwise(series); }

}  // namespace

ReproOutput run_repro(const ReproProfile& profile, const std::string& out_dir) {
  profile.validate();
  const auto t_start = std::chrono::steady_clock::now();

  std::string prefix;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    prefix = out_dir + "/";
  }

  // Phantom corpus. Roles keep train/val/test draws disjoint.
  std::vector<TrainPhantom> train_set, val_set, test_set;
  for (int i = 0; i < profile.n_train; ++i)
    train_set.push_back(make_train_phantom(make_seeded_phantom(profile, 0x74726eULL, i),
                                           profile.te_ms, profile.noise_sd,
                                           profile.seed * 1000003ULL + i));
  for (int i = 0; i < profile.n_val; ++i)
    val_set.push_back(make_train_phantom(make_seeded_phantom(profile, 0x76616cULL, i),
                                         profile.te_ms, profile.noise_sd,
                                         profile.seed * 2000003ULL + i));
  for (int i = 0; i < profile.n_test; ++i)
    test_set.push_back(make_train_phantom(make_seeded_phantom(profile, 0x747374ULL, i),
                                          profile.te_ms, profile.noise_sd,
                                          profile.seed * 3000003ULL + i));

  std::vector<ParamMaps> references;
  references.reserve(test_set.size());
  for (const TrainPhantom& ph : test_set) references.push_back(reference_maps(ph));

  ReproOutput output;
  std::vector<MethodResult> methods;
  const int t = static_cast<int>(profile.te_ms.size());

  for (std::size_t ri = 0; ri < profile.r_values.size(); ++ri) {
    const double r = profile.r_values[ri];
    const std::vector<MaskSet> library =
        make_mask_library(profile.library_size, profile.ny, t, r, profile.center_frac,
                          profile.seed + 17 * (ri + 1), profile.mask_alpha);

    // Unseen evaluation masks: drawn from a stream disjoint from the
    // library derivation.
    auto test_mask = [&](int which) {
      Rng derive = Rng::stream(profile.seed, {0x65766c6dULL, ri, static_cast<std::uint64_t>(which)});
      return make_maskset(profile.ny, t, r, profile.center_frac, derive.next(),
                          profile.mask_alpha);
    };
    const MaskSet eval_mask_a = test_mask(0);
    const MaskSet eval_mask_b = test_mask(1);

    TrainConfig mantis_config = profile.train_config;
    TrainConfig cnn_config = profile.train_config;
    cnn_config.lambda_data = 0.0;

    const TrainResult mantis_run = train(mantis_config, train_set, val_set, library,
                                         profile.netspec);
    const TrainResult cnn_run = train(cnn_config, train_set, val_set, library,
                                      profile.netspec);
    if (mantis_run.diverged || cnn_run.diverged)
      fail(ErrorCode::numeric_failure, "repro: training diverged");
    if (ri == 0) output.mantis_train_loss = mantis_run.train_loss;

    const Network net(profile.netspec);
    if (!prefix.empty()) {
      std::ostringstream stem;
      stem << prefix << "mantis_r" << r << ".qmt";
      write_container(stem.str(), net.to_blob(mantis_run.best));
      std::ostringstream loss_csv;
      loss_csv << prefix << "mantis_r" << r << "_loss.csv";
      std::ofstream out(loss_csv.str(), std::ios::trunc);
      out << "epoch,train_loss,val_loss\n";
      for (std::size_t e = 0; e < mantis_run.train_loss.size(); ++e)
        out << e << ',' << mantis_run.train_loss[e] << ',' << mantis_run.val_loss[e] << '\n';
    }

    MethodResult zf{"zf", r, {}}, glr{"glr", r, {}}, llr{"llr", r, {}};
    MethodResult cnn{"cnn-only", r, {}}, mantis{"mantis", r, {}};
    std::vector<double> probe_a, probe_b;

    for (std::size_t i = 0; i < test_set.size(); ++i) {
      const TrainPhantom& ph = test_set[i];
      const EchoSeries zf_series = zero_filled_series(ph, eval_mask_a);
      zf.maps.push_back(fit_series_maps(zf_series));

      TrainSample sample = make_sample(ph, eval_mask_a);
      KSpaceSet kspace = kspace_from_stack(sample.d, ph.te_ms, eval_mask_a);
      glr.maps.push_back(fit_series_maps(recon_glr(kspace, profile.ista).series));
      llr.maps.push_back(fit_series_maps(recon_llr(kspace, profile.ista).series));

      cnn.maps.push_back(infer(net, cnn_run.best, zf_series, &references[i]));
      mantis.maps.push_back(infer(net, mantis_run.best, zf_series, &references[i]));

      probe_a.push_back(nrmse_percent(mantis.maps.back(), references[i]));
      const EchoSeries zf_b = zero_filled_series(ph, eval_mask_b);
      probe_b.push_back(
          nrmse_percent(infer(net, mantis_run.best, zf_b, &references[i]), references[i]));
    }
    if (ri == 0) {
      double mean_a = 0.0, mean_b = 0.0;
      for (double v : probe_a) mean_a += v;
      for (double v : probe_b) mean_b += v;
      output.mask_probe_nrmse_a = mean_a / probe_a.size();
      output.mask_probe_nrmse_b = mean_b / probe_b.size();
    }

    methods.push_back(std::move(zf));
    methods.push_back(std::move(glr));
    methods.push_back(std::move(llr));
    methods.push_back(std::move(cnn));
    methods.push_back(std::move(mantis));
  }

  output.report = make_report(references, methods, prefix);
  if (!prefix.empty()) {
    write_container(prefix + "report.qmt", report_to_table(output.report));
    nlohmann::json echo;
    echo["profile"] = profile.name;
    echo["seed"] = profile.seed;
    echo["ny"] = profile.ny;
    echo["nx"] = profile.nx;
    echo["n_train"] = profile.n_train;
    echo["n_val"] = profile.n_val;
    echo["n_test"] = profile.n_test;
    echo["noise_sd"] = profile.noise_sd;
    echo["r_values"] = profile.r_values;
    echo["epochs"] = profile.train_config.epochs;
    echo["lambda_data"] = profile.train_config.lambda_data;
    echo["lambda_cnn"] = profile.train_config.lambda_cnn;
    echo["lr"] = profile.train_config.lr;
    echo["batch"] = profile.train_config.batch;
    std::ofstream out(prefix + "repro.config.json", std::ios::trunc);
    out << echo.dump(2) << '\n';
  }

  output.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return output;
}

}  // namespace qmt
