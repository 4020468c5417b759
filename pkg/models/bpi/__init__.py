from models.bpi.bpi_models import BackupResult, BpiSettings, BpiTrace, ImprovementMode, ImprovementResult, \
                                  IterationRecord, ParamSet, SparseIteration, TimingSummary
