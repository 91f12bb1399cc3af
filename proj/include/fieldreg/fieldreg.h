// Copyright 2026 The fieldreg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FIELDREG_FIELDREG_H_
#define FIELDREG_FIELDREG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(FIELDREG_BUILDING_LIBRARY)
#define FR_API __declspec(dllexport)
#else
#define FR_API __declspec(dllimport)
#endif
#else
#define FR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fr_status {
  FR_OK = 0,
  FR_ERR_INVALID_ARGUMENT = 1,
  FR_ERR_OUT_OF_RANGE = 2,
  FR_ERR_PARALLEL_RAYS = 3,
  FR_ERR_INSUFFICIENT_VIEWS = 4,
  FR_ERR_DEGENERATE_CONFIGURATION = 5,
  FR_ERR_NON_FINITE_DENSITY = 6,
  FR_ERR_NO_CAMERAS = 7,
  FR_ERR_EMPTY_SAMPLE_SET = 8,
  FR_ERR_EMPTY_KEYPOINTS = 9,
  FR_ERR_NON_POSITIVE_PREDICTION = 10,
  FR_ERR_DEGENERATE_FIELD = 11,
  FR_ERR_EMPTY_MESH = 12,
  FR_ERR_ZERO_DIAMETER = 13,
  FR_ERR_NON_FINITE_LOSS = 14,
  FR_ERR_MALFORMED_MANIFEST = 15,
  FR_ERR_IO = 16,
  FR_ERR_KEYPOINT_MISMATCH = 17,
  FR_ERR_CONFLICT = 18,
  FR_ERR_INTERNAL = 99
} fr_status;

FR_API const char* fr_version(void);
FR_API const char* fr_status_string(fr_status status);
/* Message of the last failed call on this thread; never NULL. */
FR_API const char* fr_last_error_message(void);

/* Scenes */

typedef struct fr_scene fr_scene;

typedef struct fr_scene_info {
  double radius;
  int num_views;
  int analytic;
  int has_emission;
} fr_scene_info;

FR_API fr_status fr_scene_open(const char* dir, fr_scene** out);
FR_API void fr_scene_close(fr_scene* scene);
FR_API fr_status fr_scene_get_info(const fr_scene* scene, fr_scene_info* out);
/* width <= 0 keeps the camera's native size. depth_pfm_path may be NULL. */
FR_API fr_status fr_scene_render(const fr_scene* scene, int view, int width, const char* png_path,
                                 const char* depth_pfm_path);
/* ASCII "x y z" lines of back-projected expected depth from every view. */
FR_API fr_status fr_scene_export_point_cloud(const fr_scene* scene, int width, const char* out_path,
                                             size_t* count);
/* Analytic scenes only. xyz_out holds 3 * capacity doubles. */
FR_API fr_status fr_scene_sample_surface(const fr_scene* scene, size_t capacity, uint64_t seed,
                                         double* xyz_out, size_t* written);

/* Distillation */

typedef struct fr_distill_options {
  int resolution;
  double delta;
  double epsilon;
  const double* sigmas;
  size_t num_sigmas;
  int monte_carlo; /* 0: exact separable convolution, 1: per-node sampling */
  int samples;
  uint64_t seed;
} fr_distill_options;

FR_API void fr_distill_options_default(fr_distill_options* options);
/* Writes <scene_dir>/distilled/surface/. */
FR_API fr_status fr_distill(const char* scene_dir, const fr_distill_options* options);

/* Registration */

typedef struct fr_register_options {
  const char* keypoints_path;      /* NULL: each scene's keypoints.json */
  const char* config_json;         /* JSON object of overrides, may be NULL */
  const char* const* overrides;    /* "key=value" strings applied after config_json */
  size_t num_overrides;
  int restarts;
  int resolution;
  const char* trace_path;          /* line-delimited JSON, may be NULL */
  const char* result_path;         /* result JSON, may be NULL */
} fr_register_options;

FR_API void fr_register_options_default(fr_register_options* options);
/* transform_out receives the A -> B transform, 4x4 row-major. */
FR_API fr_status fr_register(const char* scene_a_dir, const char* scene_b_dir,
                             const fr_register_options* options, double transform_out[16],
                             int* chosen_restart);

/* Metrics. Transforms are 4x4 row-major. */
FR_API fr_status fr_pose_error(const double pred[16], const double gt[16], double* delta_t,
                               double* delta_R, int* gimbal_warning);
FR_API fr_status fr_add3d(const double* vertices, size_t count, const double pred[16],
                          const double gt[16], double* out);

/* HTTP service */

typedef struct fr_service fr_service;

FR_API fr_status fr_service_start(const char* host, int port, const char* scenes_root, int restarts,
                                  int resolution, fr_service** out);
FR_API int fr_service_port(const fr_service* service);
FR_API void fr_service_wait(fr_service* service);
FR_API void fr_service_stop(fr_service* service);
FR_API void fr_service_destroy(fr_service* service);

#ifdef __cplusplus
}
#endif

#endif  /* FIELDREG_FIELDREG_H_ */
