"""Result documents and where they are written"""
from typing import Any, Dict, List, Optional, Sequence

import click

from homlab.models import SCHEMA_VERSION, OutputFormat
from homlab.utils.enhanced_logging import get_logger
from homlab.utils.error_handling import ErrorCategory, HomlabError
from homlab.utils.serialization import csv_text, dump_json

logger = get_logger(__name__)


def result_document(run_config, result: Any) -> Dict[str, Any]:
    """Versioned envelope; carries no run id or timestamp so reruns compare byte for byte."""
    return {
        'schema_version': SCHEMA_VERSION,
        'command': run_config.command.value,
        'run_config': run_config.to_dict(),
        'result': result,
    }


def write_text(text: str, path: Optional[str]) -> None:
    if path is None:
        click.echo(text, nl=False)
        return
    try:
        with open(path, 'w', encoding='utf-8', newline='') as stream:
            stream.write(text)
    except OSError as e:
        raise HomlabError(f"cannot write {path}: {e.strerror}",
                          category=ErrorCategory.INPUT_OUTPUT, path=path) from e
    logger.info("Output written", path=path, bytes=len(text))


def emit(run_config, result: Any, header: Optional[Sequence[str]] = None,
         rows: Optional[List[Sequence[Any]]] = None) -> None:
    """JSON document, or the CSV table with the JSON document as optional summary."""
    document = result_document(run_config, result)
    if run_config.format is OutputFormat.CSV and header is not None:
        write_text(csv_text(header, rows or []), run_config.output)
        if run_config.summary:
            write_text(dump_json(document) + '\n', run_config.summary)
        return
    write_text(dump_json(document) + '\n', run_config.output)


def error_line(error: Exception, run_id: Optional[str] = None) -> str:
    """Single-line JSON diagnostic for standard error."""
    if isinstance(error, HomlabError):
        payload = error.to_dict()
    elif isinstance(error, click.ClickException):
        payload = {'error': {'type': type(error).__name__, 'message': error.format_message(),
                             'category': ErrorCategory.VALIDATION.value}}
    else:
        payload = {'error': {'type': type(error).__name__, 'message': str(error),
                             'category': ErrorCategory.UNKNOWN.value}}
    if run_id:
        payload['run_id'] = run_id
    return dump_json(payload, indent=None)
