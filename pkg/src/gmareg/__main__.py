from gmareg.pipeline.cli import run

run()
