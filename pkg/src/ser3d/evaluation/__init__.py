from .export import export_features, read_features_csv, write_embedding, write_features_csv
from .metrics import FoldResult, confusion_matrix, row_percent, unweighted_accuracy
from .report import format_results, read_results, summarize, write_results
from .tsne import TsneResult, tsne, tsne_run
from .wilcoxon import WilcoxonResult, wilcoxon_signed_rank
