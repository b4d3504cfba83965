#include "laminar/laminar.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "laminar/parallel.hpp"
#include "laminar/phantom.hpp"
#include "laminar/pipeline.hpp"
#include "laminar/volume_io.hpp"

struct lam_volume {
  laminar::ScalarVolume v;
};

namespace {

thread_local std::string g_last_error;

lam_status status_of(laminar::ErrorKind k) {
  using laminar::ErrorKind;
  switch (k) {
    case ErrorKind::parameter: return LAM_ERR_PARAMETER;
    case ErrorKind::geometry: return LAM_ERR_GEOMETRY;
    case ErrorKind::domain: return LAM_ERR_DOMAIN;
    case ErrorKind::format: return LAM_ERR_FORMAT;
    case ErrorKind::conversion: return LAM_ERR_CONVERSION;
    case ErrorKind::io: return LAM_ERR_IO;
    case ErrorKind::data: return LAM_ERR_DATA;
    case ErrorKind::topology: return LAM_ERR_TOPOLOGY;
    case ErrorKind::stage: return LAM_ERR_STAGE;
    case ErrorKind::convergence: return LAM_ERR_CONVERGENCE;
    case ErrorKind::usage: return LAM_ERR_USAGE;
  }
  return LAM_ERR_INTERNAL;
}

lam_status fail_with(lam_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
lam_status guarded(F&& f) {
  try {
    return f();
  } catch (const laminar::Error& e) {
    return fail_with(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(LAM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail_with(LAM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail_with(LAM_ERR_INTERNAL, "unknown failure");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* lam_version(void) { return "0.1.0"; }

const char* lam_last_error(void) { return g_last_error.c_str(); }

const char* lam_status_name(lam_status status) {
  switch (status) {
    case LAM_OK: return "ok";
    case LAM_ERR_PARAMETER: return "parameter";
    case LAM_ERR_GEOMETRY: return "geometry";
    case LAM_ERR_DOMAIN: return "domain";
    case LAM_ERR_FORMAT: return "format";
    case LAM_ERR_CONVERSION: return "conversion";
    case LAM_ERR_IO: return "io";
    case LAM_ERR_DATA: return "data";
    case LAM_ERR_TOPOLOGY: return "topology";
    case LAM_ERR_STAGE: return "stage";
    case LAM_ERR_CONVERGENCE: return "convergence";
    case LAM_ERR_USAGE: return "usage";
    case LAM_ERR_NULL_ARGUMENT: return "null_argument";
    case LAM_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

int lam_status_exit_code(lam_status status) {
  switch (status) {
    case LAM_OK: return 0;
    case LAM_ERR_PARAMETER:
    case LAM_ERR_USAGE:
    case LAM_ERR_NULL_ARGUMENT:
      return 2;
    case LAM_ERR_CONVERGENCE: return 4;
    default: return 3;
  }
}

lam_status lam_set_workers(int workers) {
  if (workers < 0) return fail_with(LAM_ERR_PARAMETER, "worker count must be >= 0");
  return guarded([&] {
    laminar::set_worker_count(workers);
    return LAM_OK;
  });
}

int lam_get_workers(void) { return laminar::worker_count(); }

void lam_set_logging(int enabled) { laminar::pipeline::set_log_stream(enabled ? stderr : nullptr); }

lam_status lam_volume_create(int nx, int ny, int nz, double sx, double sy, double sz, lam_volume** out) {
  if (!out) return fail_with(LAM_ERR_NULL_ARGUMENT, "output handle pointer is null");
  *out = nullptr;
  return guarded([&] {
    auto* h = new lam_volume{laminar::ScalarVolume(laminar::Index3{nx, ny, nz}, laminar::Vec3{sx, sy, sz})};
    *out = h;
    return LAM_OK;
  });
}

lam_status lam_volume_read(const char* path, lam_volume** out) {
  if (!path || !out) return fail_with(LAM_ERR_NULL_ARGUMENT, "path or output handle pointer is null");
  *out = nullptr;
  return guarded([&] {
    *out = new lam_volume{laminar::io::read_volume(path)};
    return LAM_OK;
  });
}

lam_status lam_volume_write(const lam_volume* volume, const char* path) {
  if (!volume || !path) return fail_with(LAM_ERR_NULL_ARGUMENT, "volume or path is null");
  return guarded([&] {
    laminar::io::write_volume(volume->v, path);
    return LAM_OK;
  });
}

void lam_volume_free(lam_volume* volume) { delete volume; }

lam_status lam_volume_dims(const lam_volume* volume, int dims[3]) {
  if (!volume || !dims) return fail_with(LAM_ERR_NULL_ARGUMENT, "volume or dims is null");
  for (int a = 0; a < 3; ++a) dims[a] = volume->v.dims()[static_cast<std::size_t>(a)];
  return LAM_OK;
}

lam_status lam_volume_spacing(const lam_volume* volume, double spacing[3]) {
  if (!volume || !spacing) return fail_with(LAM_ERR_NULL_ARGUMENT, "volume or spacing is null");
  for (int a = 0; a < 3; ++a) spacing[a] = volume->v.spacing()[static_cast<std::size_t>(a)];
  return LAM_OK;
}

size_t lam_volume_size(const lam_volume* volume) { return volume ? volume->v.size() : 0; }

double* lam_volume_data(lam_volume* volume) { return volume ? volume->v.data().data() : nullptr; }

lam_status lam_phantom_image(const char* spec_json, lam_volume** image) {
  if (!spec_json || !image) return fail_with(LAM_ERR_NULL_ARGUMENT, "spec or output handle pointer is null");
  *image = nullptr;
  return guarded([&] {
    const auto spec = laminar::phantom::PhantomSpec::from_json(spec_json);
    *image = new lam_volume{laminar::phantom::generate(spec).image};
    return LAM_OK;
  });
}

lam_status lam_stage_run(const char* stage, const char* args_json, char** result_json) {
  if (!stage || !args_json || !result_json) return fail_with(LAM_ERR_NULL_ARGUMENT, "stage, arguments or result pointer is null");
  *result_json = nullptr;
  return guarded([&] {
    const auto r = laminar::pipeline::run_stage(stage, args_json);
    *result_json = copy_string(r.json);
    if (!r.converged) return fail_with(LAM_ERR_CONVERGENCE, std::string(stage) + ": solver stopped before convergence");
    return LAM_OK;
  });
}

void lam_string_free(char* s) { std::free(s); }

}  // extern "C"
