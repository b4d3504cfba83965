/* C interface to the laminar thickness library.
 *
 * All functions return a lam_status. On failure a message is available from
 * lam_last_error() on the calling thread until the next failing call there.
 * Handles are opaque; release them with the matching *_free function. */
#ifndef LAMINAR_H
#define LAMINAR_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define LAM_API __declspec(dllexport)
#else
#define LAM_API __attribute__((visibility("default")))
#endif

typedef enum lam_status {
  LAM_OK = 0,
  LAM_ERR_PARAMETER = 1,
  LAM_ERR_GEOMETRY = 2,
  LAM_ERR_DOMAIN = 3,
  LAM_ERR_FORMAT = 4,
  LAM_ERR_CONVERSION = 5,
  LAM_ERR_IO = 6,
  LAM_ERR_DATA = 7,
  LAM_ERR_TOPOLOGY = 8,
  LAM_ERR_STAGE = 9,
  LAM_ERR_CONVERGENCE = 10,
  LAM_ERR_USAGE = 11,
  LAM_ERR_NULL_ARGUMENT = 12,
  LAM_ERR_INTERNAL = 13
} lam_status;

typedef struct lam_volume lam_volume;

LAM_API const char* lam_version(void);

/* Message of the most recent failure on this thread ("" if none). */
LAM_API const char* lam_last_error(void);

/* Short machine-readable name of a status ("ok", "data", "convergence", ...). */
LAM_API const char* lam_status_name(lam_status status);

/* Command-line exit code for a status: 0 ok, 2 usage, 3 data/format/io, 4 non-convergence. */
LAM_API int lam_status_exit_code(lam_status status);

/* Worker threads for voxel-parallel loops; results do not depend on it. 0 selects the hardware count. */
LAM_API lam_status lam_set_workers(int workers);
LAM_API int lam_get_workers(void);

/* Structured JSON-lines log on stderr (enabled by default). */
LAM_API void lam_set_logging(int enabled);

/* Scalar volumes (double precision, x fastest). */
LAM_API lam_status lam_volume_create(int nx, int ny, int nz, double sx, double sy, double sz, lam_volume** out);
LAM_API lam_status lam_volume_read(const char* path, lam_volume** out);
LAM_API lam_status lam_volume_write(const lam_volume* volume, const char* path);
LAM_API void lam_volume_free(lam_volume* volume);
LAM_API lam_status lam_volume_dims(const lam_volume* volume, int dims[3]);
LAM_API lam_status lam_volume_spacing(const lam_volume* volume, double spacing[3]);
LAM_API size_t lam_volume_size(const lam_volume* volume);
/* Direct access to the voxel buffer; valid until the handle is freed. */
LAM_API double* lam_volume_data(lam_volume* volume);

/* Renders the image of a phantom described by a JSON spec. */
LAM_API lam_status lam_phantom_image(const char* spec_json, lam_volume** image);

/* Runs a pipeline stage on a JSON argument object. On LAM_OK and on
 * LAM_ERR_CONVERGENCE (artifacts written but flagged) *result_json receives
 * a JSON report to be released with lam_string_free; otherwise it is NULL. */
LAM_API lam_status lam_stage_run(const char* stage, const char* args_json, char** result_json);
LAM_API void lam_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* LAMINAR_H */
