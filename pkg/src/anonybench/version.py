from pathlib import Path

VERSION = Path(__file__).with_name('version.txt').read_text(encoding='utf-8').strip()
TOOL_NAME = 'anonybench'
TOOL_ID = f'{TOOL_NAME}/{VERSION}'
