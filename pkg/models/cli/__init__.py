from models.cli.run_models import BenchReport, BenchRow, ControllerSummary, EvalReport, PolicyDocument, \
                                  PolicyNodeDocument, RunConfig, RunReport
