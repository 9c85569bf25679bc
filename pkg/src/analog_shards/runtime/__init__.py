"""Master/worker protocol runtime: wire format, workers, transports."""
from .master import LR_PRODUCT, Master, OperationCounts, ProtocolResult, Transcript, TranscriptEntry, run_protocol
from .transport import InProcessTransport, SocketTransport, Transport, local_worker_processes
from .wire import MessageKind, TaskSpec, WireMessage
from .worker import Worker, worker_eval

__all__ = [
    "LR_PRODUCT",
    "InProcessTransport",
    "Master",
    "MessageKind",
    "OperationCounts",
    "ProtocolResult",
    "SocketTransport",
    "TaskSpec",
    "Transcript",
    "TranscriptEntry",
    "Transport",
    "WireMessage",
    "Worker",
    "local_worker_processes",
    "run_protocol",
    "worker_eval",
]
