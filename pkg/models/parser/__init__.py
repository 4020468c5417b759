from models.parser.parser_models import ParseDiagnostic, ParseOutcome, Severity
