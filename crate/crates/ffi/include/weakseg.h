#ifndef WEAKSEG_H
#define WEAKSEG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WsStatus {
  WS_STATUS_OK = 0,
  WS_STATUS_NULL_POINTER = 1,
  WS_STATUS_INVALID_ARGUMENT = 2,
  WS_STATUS_SHAPE_MISMATCH = 3,
  WS_STATUS_INVALID_MESH = 4,
  WS_STATUS_NUMERIC = 5,
  WS_STATUS_EMPTY = 6,
  WS_STATUS_FORMAT = 7,
  WS_STATUS_IO = 8,
  WS_STATUS_PANIC = 9,
} WsStatus;

typedef enum WsDtype {
  WS_DTYPE_U8 = 0,
  WS_DTYPE_F32 = 1,
} WsDtype;

// Opaque volume: a binary (u8) mask or an f32 image.
typedef struct WsGrid WsGrid;

// Opaque triangle mesh.
typedef struct WsMesh WsMesh;

typedef struct WsDeformParams {
  double alpha;
  double beta;
  double tau;
  double kappa;
  size_t max_iters;
  double tol;
} WsDeformParams;

typedef struct WsDeformSummary {
  size_t iterations_used;
  double initial_residual;
  double final_residual;
  bool converged;
} WsDeformSummary;

typedef struct WsLoss {
  double l_ce;
  double l_mse;
  double lambda;
  double total;
} WsLoss;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of the last failure on this thread, or NULL. The pointer is
// valid until the next `ws_*` call on the same thread.
const char *ws_last_error(void);

struct WsDeformParams ws_deform_params_default(void);

// Load an RVOL file.
enum WsStatus ws_grid_load(const char *path, struct WsGrid **out_grid);

enum WsStatus ws_grid_save(const struct WsGrid *grid, const char *path);

// New grid copied from `len` row-major values. `dtype` selects how `data`
// is read: `U8` expects `uint8_t*`, `F32` expects `float*`.
enum WsStatus ws_grid_new(const size_t *dims,
                          const double *spacing,
                          const double *origin,
                          enum WsDtype dtype,
                          const void *data,
                          size_t len,
                          struct WsGrid **out_grid);

void ws_grid_free(struct WsGrid *grid);

// Dims as (depth, height, width) into `out_dims[3]`.
enum WsStatus ws_grid_dims(const struct WsGrid *grid, size_t *out_dims);

enum WsDtype ws_grid_dtype(const struct WsGrid *grid);

// Copy the voxels as f32 into `buf`, which must hold exactly the voxel count.
enum WsStatus ws_grid_copy_f32(const struct WsGrid *grid, float *buf, size_t len);

// Number of nonzero voxels.
enum WsStatus ws_grid_count_nonzero(const struct WsGrid *grid, size_t *out_count);

enum WsStatus ws_mesh_icosphere(uint32_t subdivisions,
                                double radius,
                                const double *center,
                                struct WsMesh **out_mesh);

enum WsStatus ws_mesh_load_obj(const char *path, struct WsMesh **out_mesh);

enum WsStatus ws_mesh_save_obj(const struct WsMesh *mesh, const char *path);

void ws_mesh_free(struct WsMesh *mesh);

size_t ws_mesh_vertex_count(const struct WsMesh *mesh);

size_t ws_mesh_face_count(const struct WsMesh *mesh);

// Copy vertices as packed (z, y, x) triples; `len` must be 3 * vertex count.
enum WsStatus ws_mesh_copy_vertices(const struct WsMesh *mesh, double *buf, size_t len);

// Deform `template` toward `n_points` packed (z, y, x) points.
// `params` may be NULL for defaults; `out_summary` may be NULL.
enum WsStatus ws_deform(const struct WsMesh *template_,
                        const double *points_zyx,
                        size_t n_points,
                        const struct WsDeformParams *params,
                        struct WsMesh **out_mesh,
                        struct WsDeformSummary *out_summary);

// Place a sphere from the points, deform it and rasterize on the grid of
// `like`: the same pipeline as the CLI `deform --volume` and the service.
// `template` may be NULL to place a sphere; `params` and `out_summary` may be NULL.
enum WsStatus ws_fit_points(const double *points_zyx,
                            size_t n_points,
                            const struct WsGrid *like,
                            const struct WsMesh *template_,
                            uint32_t subdivisions,
                            const struct WsDeformParams *params,
                            struct WsMesh **out_mesh,
                            struct WsGrid **out_raster,
                            struct WsDeformSummary *out_summary);

// Binary label of the mesh interior on the grid of `like`.
enum WsStatus ws_rasterize(const struct WsMesh *mesh,
                           const struct WsGrid *like,
                           struct WsGrid **out_grid);

enum WsStatus ws_iou(const struct WsGrid *a, const struct WsGrid *b, double *out_iou);

// Loss of prediction `yhat` against supervision `y` on image `x`, with the
// reconstruction taken from `yhat` and weights from the boundary band of
// `template` (radius `band` voxels, weights `w_hi` / `w_lo`).
enum WsStatus ws_loss(const struct WsGrid *y,
                      const struct WsGrid *yhat,
                      const struct WsGrid *x,
                      const struct WsGrid *template_,
                      double lambda,
                      double band,
                      float w_hi,
                      float w_lo,
                      struct WsLoss *out_loss);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WEAKSEG_H */
