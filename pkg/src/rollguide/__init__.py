"""Guided diffusion sampling for symbolic music.

The sampler steers a diffusion model toward non-differentiable rule
targets by drawing several stochastic realizations of each reverse step
and keeping the one whose implied clean sample scores best.  The package
bundles the sampler, a symbolic-music rule suite over piano rolls,
replacement-based editing, gradient-guidance baselines, objective
metrics, MIDI / binary roll I/O and a command-line front end.
"""

from .errors import (CapabilityError, EfficiencyError, FormatError,
                     MidiParseError, NumericError, ParameterError,
                     RollguideError, ShapeError, StateError, TrainingError)
from .guidance import (GuidanceConfig, StepDiagnostics, ddpm_sample,
                       desirability_mc, dps_rule_step_direction, edit_sample,
                       hybrid_gradient_scg_sample, scg_ddpm_sample,
                       scg_sddim_sample, select_candidate, uniform_taus,
                       write_diagnostics)
from .metrics import (AttributeSet, chroma_similarity, distribution_overlap,
                      groove_similarity, overlapping_area, rejection_oracle,
                      seven_attributes)
from .pianoroll_io import (load_roll, midi_to_roll, pitch_range_mask,
                           roll_to_midi, save_roll, time_window_mask)
from .rules import (DEFAULT_RULE_WEIGHTS, PianoRoll, RuleGuidanceLoss,
                    RuleTarget, chord_sequence, composite_loss, encode_roll,
                    extract_target, note_density, pitch_histogram, rule_loss,
                    targets_from_json, targets_to_json,
                    threshold_postprocess)
from .schedule import (NoiseSchedule, ddpm_posterior_mean, forward_diffuse,
                       make_linear_schedule, schedule_from_betas, tweedie_x0)
from .scores import (DenoiserScoreModel, GmmScoreModel, GmmSpec, TrainConfig,
                     gmm_eps, gmm_logpdf, gmm_marginal, gmm_score,
                     load_denoiser, save_denoiser, train_denoiser)

__version__ = "0.1.0"
