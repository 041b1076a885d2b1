"""
Sensor-pattern fingerprints from compressed video.

Each coding block's contribution to the fingerprint is weighted by what the
codec did to it: skipped blocks carry no fresh sensor noise, heavily
quantized blocks carry less, and the lambda*rate cost of a block predicts
how much survives. Fingerprints are matched by peak-to-correlation energy.
"""
from .bitstream import (NalUnit, ParameterSetContext, Pps,
                        SliceHeaderInfo, Sps, load_trace, parse_annexb,
                        parse_pps, parse_slice_header, parse_sps, save_trace,
                        serialize_trace, split_nal_units,
                        validate_against_slices)
from .calibration import (CalibrationRun, CalibrationVideo, SplicedFrame,
                          SplicedFrameSet, build_lambda_rate_table,
                          build_qp_table, calibrate_lambda_rate,
                          calibrate_qp, quantile_bucket_edges,
                          splice_by_lambda_rate)
from .errors import (AllMaskedOut, BitstreamExhausted, BlockPrnuError,
                     ConfigError, CoverageGap, DegenerateFingerprint,
                     DimensionMismatch, EmptyAccumulator, EmptyBucket,
                     EmptyInput, InsufficientData, InsufficientFrames,
                     MalformedStream, MissingAnchor, MissingKey,
                     MissingParameterSet, RangeError, SchemaError,
                     TruncatedUnit, UnsupportedProfile, UnsupportedTransform)
from .evaluation import (BPP_GROUP_EDGES, ExperimentGrid, GridVideo,
                         RocCurve, ThresholdTable, format_ratio,
                         group_labels_for_edges, improvement_ratios, roc,
                         run_grid, sbr_summary, scheme_mean_pce,
                         threshold_table)
from .matching import (DEFAULT_THRESHOLD, MatchReport, PceConfig,
                       batch_match, crosscorr, format_report_records, pce)
from .noise import (DenoiseConfig, NoiseResidual, Picture, denoise,
                    extract_residual, read_yuv420, saturation_mask,
                    wiener_adaptive, write_yuv420, zero_mean_rows_cols)
from .prnu import (Fingerprint, FingerprintAccumulator,
                   apply_inverse_transform, estimate_fingerprint, finalize,
                   read_fingerprint, write_fingerprint)
from .simulator import (CodecConfig, EncodeResult, SensorModel, encode_block,
                        encode_sequence, oracle_weight_d, simulate_capture,
                        synthetic_clean_frames)
from .trace import (BLOCK_TYPES, MACROBLOCK, BlockRecord, FrameBlockMap,
                    RdCost, TraceFile, bits_per_pixel, lambda_grid,
                    lambda_of_qp, lambda_rate, skipped_block_rate)
from .weighting import (ALL_SCHEMES, ANCHOR_LAMBDA_RATE, ANCHOR_QP,
                        TABLE_SCHEMES, SchemeConfig, WeightTable, build_mask,
                        mask_lambda_rate, mask_qp, mask_skip_eliminate,
                        paint_blocks)

__version__ = "0.1.0"
