"""
Run manifests: the resolved configuration, input and output digests, tool
version and timestamps of one command. A manifest lives next to the
artifacts it lists; artifact paths are relative to its directory.
"""
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from dateutil.parser import parse as dt_parse
from dateutil.tz import tzutc

from .checkpoint import atomic_write_text
from .exception import ArtifactIOException, ConfigException
from .version import TOOL_ID

MANIFEST_SUFFIX = '.manifest.json'


def utc_now() -> datetime:
    return datetime.now(tzutc())


def digest_file(path: Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise ArtifactIOException(f'Cannot read {path}: {exc.strerror}', str(path)) from exc


@dataclass
class RunManifest:
    """
    Everything needed to replay a command: ``argv`` together with the
    rendered ``config`` reproduces every listed artifact.
    """
    command: str
    config: str
    config_digest: str
    argv: List[str] = field(default_factory=list)
    dataset_digest: str = ''
    inputs: Dict[str, str] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    conventions: Dict[str, Any] = field(default_factory=dict)
    tool: str = TOOL_ID
    started: datetime = field(default_factory=utc_now)
    finished: Optional[datetime] = None

    def add_artifact(self, root: Path, path: Path) -> str:
        digest = digest_file(path)
        self.artifacts[Path(path).relative_to(root).as_posix()] = digest
        return digest

    def add_input(self, path: Path) -> None:
        self.inputs[str(path)] = digest_file(path)

    def to_json(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'argv': self.argv,
            'config': self.config,
            'config_digest': self.config_digest,
            'dataset_digest': self.dataset_digest,
            'inputs': self.inputs,
            'artifacts': self.artifacts,
            'conventions': self.conventions,
            'tool': self.tool,
            'started': self.started.isoformat(),
            'finished': self.finished.isoformat() if self.finished else None,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'RunManifest':
        try:
            return cls(
                command=data['command'],
                argv=list(data.get('argv', [])),
                config=data['config'],
                config_digest=data['config_digest'],
                dataset_digest=data.get('dataset_digest', ''),
                inputs=dict(data.get('inputs', {})),
                artifacts=dict(data.get('artifacts', {})),
                conventions=dict(data.get('conventions', {})),
                tool=data.get('tool', ''),
                started=dt_parse(data['started']),
                finished=dt_parse(data['finished']) if data.get('finished') else None,
            )
        except (KeyError, ValueError, OverflowError) as exc:
            raise ConfigException(f'Malformed manifest: {exc}') from exc

    def save(self, root: Path, name: Optional[str] = None) -> Path:
        self.finished = self.finished or utc_now()
        path = Path(root) / f'{name or self.command}{MANIFEST_SUFFIX}'
        atomic_write_text(path, json.dumps(self.to_json(), indent=2, sort_keys=True) + '\n')
        return path

    @classmethod
    def load(cls, path: Path) -> 'RunManifest':
        try:
            text = Path(path).read_text(encoding='utf-8')
        except FileNotFoundError as exc:
            raise ConfigException(f'Manifest {path} does not exist', str(path)) from exc
        except OSError as exc:
            raise ArtifactIOException(f'Cannot read {path}: {exc.strerror}', str(path)) from exc
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigException(f'Manifest {path} is not valid JSON: {exc}') from exc

    def verify(self, root: Path) -> List[str]:
        """ Artifacts whose current digest differs from the recorded one (missing ones included). """
        mismatched = []
        for name, digest in sorted(self.artifacts.items()):
            path = Path(root) / name
            if not path.exists() or digest_file(path) != digest:
                mismatched.append(name)
        return mismatched

    @property
    def duration(self) -> Optional[float]:
        return (self.finished - self.started).total_seconds() if self.finished else None
