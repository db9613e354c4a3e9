"""
Table output helpers.

Functions:
    write_table: Print a DataFrame as a fixed-width table
    write_csv: Write a DataFrame as CSV preceded by '#' provenance lines

Dependencies:
    - pandas: Tables
"""

import sys
from typing import Any, Dict, List, Optional, TextIO, Union

import pandas as pd

def write_table(df: pd.DataFrame, columns: Optional[Dict[str, Dict[str, Any]]] = None,
                title: Optional[str] = None, stream: TextIO = sys.stdout) -> None:
    """
    Write a formatted table to the specified output stream.

    The index is printed as a regular column.

    Args:
        df: DataFrame to display
        columns: Column formats keyed by column (or index) name. Columns not
                 in the DataFrame are ignored. If None, every column is
                 printed with defaults.
        title: Optional title to display above the table
        stream: Output stream (defaults to sys.stdout)

    Format dictionary options:
        type: Format type ('s', 'd', 'f', 'e', 'g'). Default: from the dtype
        align: Data alignment. Default: '>' for numbers, '<' otherwise
        width: Column width. Default: 12
        decimal: Precision for floats. Default: 6
    """
    if title:
        print(f"{title}:", file=stream)

    display_df = df.reset_index() if df.index.name is not None else df.reset_index(drop=True)
    if columns is None:
        columns = {col: {} for col in display_df.columns}
    else:
        columns = {col: specs for col, specs in columns.items() if col in display_df.columns}

    formats = {}
    for col, specs in columns.items():
        kind = display_df[col].dtype.kind
        col_type = {'f': 'g', 'i': 'd', 'u': 'd'}.get(kind, 's')
        fmt = {'type': col_type, 'align': '<' if col_type == 's' else '>', 'width': 12,
               'decimal': 6}
        fmt.update(specs)
        if fmt['type'] == 's':
            data_fmt = f"{{:{fmt['align']}{fmt['width']}.{fmt['width']}}}"
        elif fmt['type'] == 'd':
            data_fmt = f"{{:{fmt['align']}{fmt['width']}d}}"
        else:
            data_fmt = f"{{:{fmt['align']}{fmt['width']}.{fmt['decimal']}{fmt['type']}}}"
        formats[col] = (data_fmt, fmt['width'], fmt['align'])

    print(' '.join(f"{str(col):>{width}.{width}}" for col, (_, width, _) in formats.items()),
          file=stream)
    print(' '.join('=' * width for _, width, _ in formats.values()), file=stream)
    for _, row in display_df.iterrows():
        cells = []
        for col, (data_fmt, width, align) in formats.items():
            value = row[col]
            if pd.isna(value):
                cells.append(f"{'N/A':{align}{width}}")
            else:
                try:
                    cells.append(data_fmt.format(value))
                except (ValueError, TypeError):
                    cells.append(f"{str(value):{align}{width}.{width}}")
        print(' '.join(cells), file=stream)

def write_csv(df: pd.DataFrame, target: Union[str, TextIO], header: List[str]) -> None:
    """
    Write comma separated values with 17 significant digits.

    Args:
        df: Table; a named index is written as the first column
        target: Output path or open text stream
        header: Lines written first, each expected to start with '#'
    """
    if isinstance(target, str):
        with open(target, 'w', newline='') as f:
            write_csv(df, f, header)
        return
    for line in header:
        target.write(line + '\n')
    df.to_csv(target, float_format='%.17g', index=df.index.name is not None,
              lineterminator='\n')
