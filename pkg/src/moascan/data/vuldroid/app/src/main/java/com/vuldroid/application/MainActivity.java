package com.vuldroid.application;

import android.content.Intent;
import android.os.Bundle;

import androidx.appcompat.app.AppCompatActivity;

public class MainActivity extends AppCompatActivity {

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);
        setContentView(R.layout.activity_main);

        findViewById(R.id.blogs).setOnClickListener(v -> startActivity(new Intent(this, BlogsViewer.class)));
        findViewById(R.id.videos).setOnClickListener(v -> startActivity(new Intent(this, YoutubeViewer.class)));
        findViewById(R.id.notes).setOnClickListener(v -> startActivity(new Intent(this, NotesViewer.class)));
        findViewById(R.id.email).setOnClickListener(v -> startActivity(new Intent(this, EmailViewer.class)));
        findViewById(R.id.share).setOnClickListener(v -> startActivity(new Intent(this, SendMsgtoApp.class)));

        if (RootDetection.isRooted("")) {
            finish();
        }
    }
}
