"""From a waveform to the stacked log-mel rows the model consumes."""

import numpy as np

from aend import datagen as dg
from aend import features as ft


def main():
    spec = ft.MelSpec()
    stack = ft.FrameStack()
    print("mel analysis: %d Hz, %d bands, %d ms window, %d ms hop"
          % (spec.sample_rate, spec.num_mels,
             1000 * spec.win_length // spec.sample_rate,
             1000 * spec.hop_length // spec.sample_rate))
    print("stacking: %d consecutive mel frames, hop %d (one row per 100 ms)"
          % (stack.context, stack.hop))

    # two "speakers" as gated sinusoid banks over a 60 frame script
    act = dg.gen_activity(num_speakers=2, num_frames=60, p_on=0.05,
                          p_off=0.1, seed=3)
    banks = dg.gen_sinusoid_banks(2, seed=3, sample_rate=spec.sample_rate)
    wave = dg.gen_waveform(act, banks, snr_db=15.0, spec=spec, stack=stack)
    print()
    print("waveform: %d samples (%.2f s)"
          % (wave.size, wave.size / spec.sample_rate))

    mel = ft.log_mel(wave, spec)
    print("log-mel:  %s (frames, bands)" % (mel.shape,))

    stacked = ft.stack_frames(mel, stack)
    t = (mel.shape[0] - stack.context) // stack.hop + 1
    print("stacked:  %s, rows = (F - context) // hop + 1 = %d"
          % (stacked.shape, t))
    print("row dim = context * bands = %d * %d = %d"
          % (stack.context, spec.num_mels, stack.context * spec.num_mels))

    direct = ft.wave_to_stacked(wave, spec, stack)
    print("wave_to_stacked matches the two steps: %s"
          % bool(np.array_equal(direct, stacked)))

    print()
    print("feature mode skips the signal path: a frame is the sum of the")
    print("active speakers' voiceprint vectors plus noise, same row dim.")
    prints = dg.gen_voiceprints(2, seed=3)
    feats = dg.gen_features(act, prints)
    print("feature-mode matrix: %s" % (feats.shape,))

    on = act.activity.any(axis=0)
    both = act.activity.all(axis=0)
    print("script: %d/%d frames active, %d overlapped"
          % (on.sum(), on.size, both.sum()))


if __name__ == "__main__":
    main()
