"""Intranet traffic monitor: capture, dissect, filter, analyze, and stream LAN packets."""

from .decode import (
    PacketRecord,
    RawFrame,
    SummaryRow,
    dissect,
)
from .filters import FilterExpr, compile_filter, eval_filter, filter_mode, print_filter
from .pcapio import read_pcap, read_pcap_file, write_pcap, write_pcap_file
from .capture import (
    CaptureSession,
    FileSource,
    LiveSource,
    ScriptedSource,
    SessionState,
    SessionTable,
    list_interfaces,
)

__version__ = "0.1.0"

__all__ = [
    "CaptureSession",
    "FileSource",
    "FilterExpr",
    "LiveSource",
    "PacketRecord",
    "RawFrame",
    "ScriptedSource",
    "SessionState",
    "SessionTable",
    "SummaryRow",
    "compile_filter",
    "dissect",
    "eval_filter",
    "filter_mode",
    "list_interfaces",
    "print_filter",
    "read_pcap",
    "read_pcap_file",
    "write_pcap",
    "write_pcap_file",
    "__version__",
]
