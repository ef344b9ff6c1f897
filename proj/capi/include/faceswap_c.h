/* C API for the face swapping library: opaque session handle, integer error
 * codes, thread-local error messages. All functions return FS_OK (0) on
 * success; on failure they return an FS_E_* code and fs_last_error() holds a
 * human-readable message until the next failing call on the same thread.
 */
#ifndef FACESWAP_C_H
#define FACESWAP_C_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FS_API __declspec(dllexport)
#else
#define FS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum {
  FS_OK = 0,
  FS_E_INVALID_ARGUMENT = 1,
  FS_E_INVALID_CONFIG = 2,
  FS_E_SHAPE = 3,
  FS_E_IO = 4,
  FS_E_CORRUPT_CHECKPOINT = 5,
  FS_E_VERSION = 6,
  FS_E_NUMERICAL = 7,
  FS_E_DEGENERATE_INPUT = 8,
  FS_E_POISONED_LOSS = 9,
  FS_E_CONTRACT = 10,
  FS_E_INSUFFICIENT_SAMPLES = 11,
  FS_E_INTERNAL = 12
};

typedef struct fs_session fs_session;

FS_API uint32_t fs_abi_version(void);
FS_API const char* fs_last_error(void);

/* Creates a session from an INI config file (NULL = built-in defaults) plus
 * "section.key=value" overrides. Networks are initialized deterministically
 * from train.seed. */
FS_API int fs_session_create(const char* config_path,
                             const char* const* overrides, size_t n_overrides,
                             fs_session** out);
FS_API void fs_session_destroy(fs_session* s);

FS_API int fs_session_save_checkpoint(fs_session* s, const char* path);
/* Replaces the session state with the checkpoint contents (config included). */
FS_API int fs_session_load_checkpoint(fs_session* s, const char* path);
FS_API int fs_session_iteration(fs_session* s, uint64_t* out);

/* losses layout: adv, id, lmk, rec, st, total */
typedef void (*fs_progress_cb)(uint64_t iteration, const double* losses,
                               void* user);
FS_API int fs_train(fs_session* s, const char* data_dir, uint64_t iterations,
                    fs_progress_cb cb, void* user);
/* Reconstruction-only generator warmup; cb receives (step, recon_loss, ...)
 * through losses[0] with the remaining slots zero. */
FS_API int fs_pretrain_generator(fs_session* s, const char* data_dir,
                                 uint64_t iterations, fs_progress_cb cb,
                                 void* user);

FS_API int fs_swap_image_files(fs_session* s, const char* source_png,
                               const char* target_png, const char* mask_png,
                               const char* source_landmarks_json,
                               const char* target_landmarks_json,
                               const char* out_final_png,
                               const char* out_side_png /* nullable */);

/* In-memory variant: 8-bit RGB row-major buffers (width*height*3) and an
 * 8-bit grayscale mask (width*height, >=128 means inner face). Landmarks are
 * interleaved x,y pairs in [0,1]. Output buffers must hold width*height*3. */
FS_API int fs_swap_image_buffers(fs_session* s, const uint8_t* source_rgb,
                                 const uint8_t* target_rgb,
                                 const uint8_t* mask_gray, int32_t width,
                                 int32_t height, const double* source_landmarks,
                                 const double* target_landmarks,
                                 size_t n_landmarks, uint8_t* out_final_rgb,
                                 uint8_t* out_side_rgb /* nullable */);

/* Target directory uses frame_%06d.png with optional landmarks_%06d.json and
 * mask_%06d.png; outputs are written with the same frame naming. mode is
 * "independent" or "temporal". source_landmarks_json may be NULL to use the
 * configured landmark provider. */
FS_API int fs_swap_video_dir(fs_session* s, const char* source_png,
                             const char* source_landmarks_json,
                             const char* target_dir, const char* out_dir,
                             const char* mode);

/* pairs manifest: JSON array of {source,target,mask,source_landmarks,
 * target_landmarks}; writes {id_similarity,id_retrieval,pose_error,
 * expression_error,fid}. */
FS_API int fs_evaluate(fs_session* s, const char* pairs_manifest_json,
                       const char* report_json_out);

typedef void (*fs_log_cb)(const char* line, void* user);
/* Runs the built-in invariant suite; returns FS_OK iff every check passed. */
FS_API int fs_self_test(fs_log_cb cb, void* user);

#ifdef __cplusplus
}
#endif

#endif /* FACESWAP_C_H */
