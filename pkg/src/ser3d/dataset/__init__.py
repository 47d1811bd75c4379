from .audio import read_audio, write_wav
from .folds import FoldPlan, make_folds, split_sizes
from .labels import CATEGORIES, CLASS_INDEX, LANDMARKS, TraceSample, map_trace, read_trace
from .manifest import UtteranceRecord, load_manifest, resolve_labels, write_manifest
from .synth import synth_corpus
